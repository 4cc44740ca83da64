#include "padis/data_io.hpp"
#include "padis/experiment.hpp"
#include "padis/png.hpp"
#include "padis/study_service.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <fstream>
#include <set>

using namespace padis;
using padis::test::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kMethods = {"padis-dps", "ista-l1", "adjoint"};

std::string method_for(const std::string& fixture_choice) {
  if (fixture_choice == "a") return "ista-l1";
  if (fixture_choice == "b") return "adjoint";
  return "padis-dps";
}

ComplexImage method_image(int m) {
  ComplexImage img(12, 12);
  for (Eigen::Index i = 0; i < img.rows(); ++i)
    for (Eigen::Index j = 0; j < img.cols(); ++j)
      img(i, j) = cdouble(0.1 + 0.01 * static_cast<double>(i + 3 * j) + 0.07 * m, 0.02 * m);
  return img;
}

// Image containers shared by every case: ground truth plus one per method.
struct Media {
  explicit Media(const fs::path& dir) : root(dir) {
    write_image(dir / "gt", method_image(3));
    for (int m = 0; m < 3; ++m) write_image(dir / kMethods[m], method_image(m));
  }
  fs::path root;
};

json study_request(const Media& media, int n, std::uint64_t seed, const std::string& id = "") {
  json cases = json::array();
  const auto fixture = padis::test::preference_table_votes();
  for (int i = 0; i < n; ++i) {
    json imgs = json::object();
    for (const auto& m : kMethods) imgs[m] = (media.root / m).string();
    cases.push_back({{"id", fixture[3 * i].case_id},
                     {"ground_truth", (media.root / "gt").string()},
                     {"images", imgs},
                     {"cohorts", fixture[3 * i].cohorts}});
  }
  json req = {{"seed", seed}, {"methods", kMethods}, {"target", "padis-dps"},
              {"raters", {"r1", "r2", "r3"}}, {"cases", cases}};
  if (!id.empty()) req["id"] = id;
  return req;
}

int slot_of(const Study& s, int index, const std::string& method) {
  const int m = static_cast<int>(std::find(s.methods.begin(), s.methods.end(), method) - s.methods.begin());
  for (int k = 0; k < 3; ++k)
    if (s.cases[index].perm[k] == m) return k;
  FAIL("method not in permutation");
  return -1;
}

int status_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const StudyError& e) {
    return e.status;
  }
  return 0;
}

// Casts every fixture vote through the store; returns the rater tokens.
void cast_fixture_votes(StudyStore& store, const std::string& id, const json& tokens) {
  const Study& s = store.study(id);
  const auto fixture = padis::test::preference_table_votes();
  for (std::size_t v = 0; v < fixture.size(); ++v) {
    const int index = static_cast<int>(v / 3);
    const int slot = slot_of(s, index, method_for(fixture[v].choice));
    store.post_vote(id, tokens[fixture[v].rater_id], index, kSlots[slot]);
  }
}

httplib::Headers bearer(const std::string& token) { return {{"Authorization", "Bearer " + token}}; }

}  // namespace

TEST_SUITE("study_service") {
  TEST_CASE("permutations are valid, seeded and cover all orderings") {
    std::set<std::array<int, 3>> seen;
    for (int i = 0; i < 60; ++i) {
      const auto p = case_permutation(42, i);
      CHECK(p == case_permutation(42, i));
      auto sorted = p;
      std::sort(sorted.begin(), sorted.end());
      CHECK(sorted == std::array<int, 3>{0, 1, 2});
      seen.insert(p);
    }
    CHECK(seen.size() == 6);
    int differ = 0;
    for (int i = 0; i < 60; ++i) differ += case_permutation(42, i) != case_permutation(43, i);
    CHECK(differ > 20);
  }

  TEST_CASE("60-case study stores one permutation per case, reproducible from the seed") {
    TempDir dir, media_dir;
    Media media(media_dir.path());
    StudyStore a(dir / "a"), b(dir / "b");
    const auto ra = a.create_study(study_request(media, 60, 7));
    const auto rb = b.create_study(study_request(media, 60, 7));
    CHECK(ra["total"] == 60);
    const Study& sa = a.study(ra["id"]);
    const Study& sb = b.study(rb["id"]);
    REQUIRE(sa.cases.size() == 60);
    for (int i = 0; i < 60; ++i) {
      CHECK(sa.cases[i].perm == sb.cases[i].perm);
      CHECK(sa.cases[i].perm == case_permutation(7, i));
    }
    CHECK(ra["tokens"].size() == 3);
    CHECK(ra["tokens"]["r1"] != rb["tokens"]["r1"]);
  }

  TEST_CASE("slot media follow the stored permutation") {
    TempDir dir, media_dir;
    Media media(media_dir.path());
    StudyStore store(dir.path());
    const auto r = store.create_study(study_request(media, 5, 11));
    const Study& s = store.study(r["id"]);
    const double scale = method_image(3).abs().maxCoeff();
    for (int i = 0; i < 5; ++i) {
      CHECK(store.get_media(s.id, i, "gt") == encode_png16(method_image(3).abs(), scale));
      for (int k = 0; k < 3; ++k)
        CHECK(store.get_media(s.id, i, kSlots[k]) == encode_png16(method_image(s.cases[i].perm[k]).abs(), scale));
    }
    const auto px = decode_png16(store.get_media(s.id, 0, "gt"));
    CHECK(px.rows() == 12);
    CHECK(px.maxCoeff() == 65535);
  }

  TEST_CASE("creation validation") {
    TempDir dir, media_dir;
    Media media(media_dir.path());
    StudyStore store(dir.path());
    json req = study_request(media, 3, 1);
    SUBCASE("two methods") {
      req["methods"] = {"padis-dps", "adjoint"};
      for (auto& c : req["cases"]) c["images"].erase("ista-l1");
    }
    SUBCASE("duplicate case ids") { req["cases"][1]["id"] = req["cases"][0]["id"]; }
    SUBCASE("missing image") { req["cases"][2]["images"]["adjoint"] = (media_dir / "nope").string(); }
    SUBCASE("image for a method is absent") {
      req["cases"][0]["images"].erase("adjoint");
      req["cases"][0]["images"]["other-m"] = (media_dir / "gt").string();
    }
    SUBCASE("no raters") { req["raters"] = json::array(); }
    SUBCASE("target outside the method set") { req["target"] = "nothing"; }
    SUBCASE("method name collides with an identifier") { req["raters"] = {"r1", "adjoint-reader"}; }
    CHECK(status_of([&] { store.create_study(req); }) == 400);
  }

  TEST_CASE("same study id twice is a conflict") {
    TempDir dir, media_dir;
    Media media(media_dir.path());
    StudyStore store(dir.path());
    store.create_study(study_request(media, 2, 1, "pilot"));
    CHECK(status_of([&] { store.create_study(study_request(media, 2, 1, "pilot")); }) == 409);
  }

  TEST_CASE("case payloads never name a method") {
    TempDir dir, media_dir;
    Media media(media_dir.path());
    StudyStore store(dir.path());
    const auto r = store.create_study(study_request(media, 60, 3));
    const std::string id = r["id"];
    const Study& s = store.study(id);
    for (const auto& rater : {"r1", "r2", "r3"})
      for (int i = 0; i < 60; ++i) {
        if (i % 7 == 0) store.post_vote(id, r["tokens"][rater], i, "B");
        const std::string body = store.get_case(id, i, r["tokens"][rater]).dump();
        for (const auto& m : kMethods) CHECK(body.find(m) == std::string::npos);
        CHECK(body.find(media_dir.path().string()) == std::string::npos);
        CHECK(body.find("perm") == std::string::npos);
      }
    const auto payload = store.get_case(id, 4, r["tokens"]["r2"]);
    CHECK(payload["ground_truth"]["label"] == "Ground Truth");
    CHECK(payload["slots"].size() == 3);
    CHECK(payload["index"] == 4);
    CHECK(s.cases[4].perm == case_permutation(3, 4));
  }

  TEST_CASE("same case gives every rater the same slot assignment") {
    TempDir dir, media_dir;
    Media media(media_dir.path());
    StudyStore store(dir.path());
    const auto r = store.create_study(study_request(media, 10, 5));
    const std::string id = r["id"];
    for (int i = 0; i < 10; ++i) {
      store.post_vote(id, r["tokens"]["r1"], i, "A");
      store.post_vote(id, r["tokens"]["r2"], i, "A");
      store.post_vote(id, r["tokens"]["r3"], i, "A");
    }
    const auto votes = store.votes(id);
    for (std::size_t v = 0; v < votes.size(); v += 3) {
      CHECK(votes[v].choice == votes[v + 1].choice);
      CHECK(votes[v].choice == votes[v + 2].choice);
      CHECK(votes[v].choice == kMethods[case_permutation(5, static_cast<int>(v / 3))[0]]);
    }
    CHECK(store.get_case(id, 3, r["tokens"]["r1"])["slots"] == store.get_case(id, 3, r["tokens"]["r3"])["slots"]);
  }

  TEST_CASE("vote errors carry their status and never change the tally") {
    TempDir dir, media_dir;
    Media media(media_dir.path());
    StudyStore store(dir.path());
    const auto r = store.create_study(study_request(media, 3, 2));
    const std::string id = r["id"], tok = r["tokens"]["r1"];
    const auto ack = store.post_vote(id, tok, 0, "C");
    CHECK(ack["status"] == "recorded");
    CHECK(ack["next_unvoted"] == 1);
    CHECK(status_of([&] { store.post_vote(id, tok, 0, "C"); }) == 409);
    CHECK(status_of([&] { store.post_vote(id, tok, 0, "A"); }) == 409);
    CHECK(status_of([&] { store.post_vote(id, tok, 1, "D"); }) == 400);
    CHECK(status_of([&] { store.post_vote(id, "forged", 1, "A"); }) == 401);
    CHECK(status_of([&] { store.post_vote(id, tok, 3, "A"); }) == 404);
    CHECK(status_of([&] { store.post_vote("missing", tok, 0, "A"); }) == 404);
    CHECK(status_of([&] { store.get_case(id, 0, ""); }) == 401);
    CHECK(status_of([&] { store.get_case(id, -1, tok); }) == 404);
    CHECK(status_of([&] { store.get_media(id, 0, "Z"); }) == 404);
    CHECK(store.votes(id).size() == 1);
    CHECK(store.get_case(id, 0, tok)["vote"] == "C");
    CHECK(store.get_case(id, 0, r["tokens"]["r2"])["vote"].is_null());
  }

  TEST_CASE("summary reproduces the preference table and equals the CLI statistics") {
    TempDir dir, media_dir;
    Media media(media_dir.path());
    StudyStore store(dir.path());
    const auto r = store.create_study(study_request(media, 60, 9));
    const std::string id = r["id"];
    cast_fixture_votes(store, id, r["tokens"]);

    const json summary = store.summary(id);
    CHECK(summary["majority"]["picks"] == 55);
    CHECK(summary["majority"]["total"] == 60);
    CHECK(std::abs(summary["majority"]["ci_lower"].get<double>() * 100 - 81.9) <= 0.1);
    CHECK(std::abs(summary["majority"]["ci_upper"].get<double>() * 100 - 96.4) <= 0.1);

    write_text_file(dir / "votes.csv", store.votes_csv(id));
    const auto cli = cmd_stats(dir / "votes.csv", "padis-dps", 3, {});
    CHECK(summary == to_json(cli));

    std::vector<VoteRecord> expect = padis::test::preference_table_votes();
    for (auto& v : expect) v.choice = method_for(v.choice);
    CHECK(to_json(summarize_votes(expect, "padis-dps")) == summary);
  }

  TEST_CASE("single rater, single case") {
    TempDir dir, media_dir;
    Media media(media_dir.path());
    StudyStore store(dir.path());
    json req = study_request(media, 1, 4);
    req["raters"] = {"solo"};
    const auto r = store.create_study(req);
    const std::string id = r["id"];
    store.post_vote(id, r["tokens"]["solo"], 0, kSlots[slot_of(store.study(id), 0, "padis-dps")]);
    const json s = store.summary(id);
    REQUIRE(s["raters"].size() == 1);
    CHECK(s["raters"][0]["proportion"] == 1.0);
    const Interval ci = wilson_ci({1, 1});
    CHECK(s["raters"][0]["ci_lower"] == ci.lower);
    CHECK(s["raters"][0]["ci_upper"] == ci.upper);
  }

  TEST_CASE("acknowledged votes survive a restart and a torn log line is ignored") {
    TempDir dir, media_dir;
    Media media(media_dir.path());
    std::string id;
    json tokens;
    {
      StudyStore store(dir.path());
      const auto r = store.create_study(study_request(media, 4, 8));
      id = r["id"];
      tokens = r["tokens"];
      store.post_vote(id, tokens["r1"], 0, "A");
      store.post_vote(id, tokens["r2"], 1, "B");
    }
    std::ofstream(dir / id / "votes.log", std::ios::app) << R"({"index": 2, "rater": "r1", "sl)";
    StudyStore reopened(dir.path());
    const auto votes = reopened.votes(id);
    REQUIRE(votes.size() == 2);
    CHECK(votes[0].rater_id == "r1");
    CHECK(votes[1].rater_id == "r2");
    CHECK(status_of([&] { reopened.post_vote(id, tokens["r1"], 0, "B"); }) == 409);
    CHECK(reopened.get_case(id, 0, tokens["r1"])["next_unvoted"] == 1);
    CHECK(reopened.study(id).cases[3].perm == case_permutation(8, 3));
    const auto next = reopened.create_study(study_request(media, 1, 1));
    CHECK(next["id"] != id);
  }

  TEST_CASE("HTTP routes end to end") {
    TempDir dir, media_dir;
    Media media(media_dir.path());
    StudyServer server(dir.path());
    const int port = server.start("127.0.0.1", 0);
    httplib::Client cli("127.0.0.1", port);

    auto created = cli.Post("/studies", study_request(media, 60, 21).dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const json r = json::parse(created->body);
    const std::string id = r["id"], base = "/studies/" + id;

    auto two = study_request(media, 2, 1);
    two["methods"] = {"padis-dps", "adjoint"};
    CHECK(cli.Post("/studies", two.dump(), "application/json")->status == 400);
    CHECK(cli.Post("/studies", "{oops", "application/json")->status == 400);

    CHECK(cli.Get(base + "/cases/0")->status == 401);
    CHECK(cli.Get(base + "/cases/0", bearer("nope"))->status == 401);
    CHECK(cli.Get(base + "/cases/60", bearer(r["tokens"]["r1"]))->status == 404);
    CHECK(cli.Get("/studies/none/cases/0", bearer(r["tokens"]["r1"]))->status == 404);

    const Study& s = server.store().study(id);
    const auto fixture = padis::test::preference_table_votes();
    for (std::size_t v = 0; v < fixture.size(); ++v) {
      const int index = static_cast<int>(v / 3);
      const std::string tok = r["tokens"][fixture[v].rater_id];
      auto got = cli.Get(base + "/cases/" + std::to_string(index), bearer(tok));
      REQUIRE(got);
      CHECK(got->status == 200);
      for (const auto& m : kMethods) CHECK(got->body.find(m) == std::string::npos);
      const json vote = {{"index", index}, {"slot", kSlots[slot_of(s, index, method_for(fixture[v].choice))]}};
      auto posted = cli.Post(base + "/votes", bearer(tok), vote.dump(), "application/json");
      REQUIRE(posted);
      CHECK(posted->status == 200);
      auto again = cli.Post(base + "/votes", bearer(tok), vote.dump(), "application/json");
      CHECK(again->status == 409);
    }
    CHECK(cli.Post(base + "/votes", bearer(r["tokens"]["r1"]), R"({"index": 0, "slot": "Q"})",
                   "application/json")->status == 400);
    CHECK(cli.Post(base + "/votes", bearer(r["tokens"]["r1"]), R"({"slot": "A"})", "application/json")->status ==
          400);

    auto img = cli.Get(base + "/cases/0/images/B");
    REQUIRE(img);
    CHECK(img->status == 200);
    CHECK(img->get_header_value("Content-Type") == "image/png");
    CHECK(img->body == server.store().get_media(id, 0, "B"));
    CHECK(cli.Get(base + "/cases/0/images/X")->status == 404);

    auto summary = cli.Get(base + "/summary");
    REQUIRE(summary);
    CHECK(summary->status == 200);
    auto csv = cli.Get(base + "/votes.csv");
    REQUIRE(csv);
    CHECK(csv->body.rfind("case_id,rater_id,choice,cohort_contrast,cohort_slices\n", 0) == 0);
    write_text_file(dir / "export.csv", csv->body);
    CHECK(json::parse(summary->body) == to_json(cmd_stats(dir / "export.csv", "padis-dps", 3, {})));
    CHECK(json::parse(summary->body)["majority"]["picks"] == 55);
    server.stop();
  }
}
