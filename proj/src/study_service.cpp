#include "padis/study_service.hpp"

#include "padis/data_io.hpp"
#include "padis/png.hpp"
#include "padis/table.hpp"

#include <httplib.h>

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

namespace padis {

namespace fs = std::filesystem;
using nlohmann::json;

std::array<int, 3> case_permutation(std::uint64_t seed, int index) {
  SplitMix64 gen(seed ^ (0xD1B54A32D192ED03ULL * (static_cast<std::uint64_t>(index) + 1)));
  std::array<int, 3> p{0, 1, 2};
  for (int i = 2; i > 0; --i) std::swap(p[i], p[gen.next() % static_cast<std::uint64_t>(i + 1)]);
  return p;
}

namespace {

StudyError bad_request(const std::string& m) { return {400, m}; }

int slot_index(const std::string& s) {
  for (int k = 0; k < 3; ++k)
    if (s == kSlots[k]) return k;
  return -1;
}

std::string new_token() {
  std::random_device rd;
  char buf[33];
  std::snprintf(buf, sizeof buf, "%08x%08x%08x%08x", rd(), rd(), rd(), rd());
  return buf;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

// Appends one line and fsyncs before returning.
void durable_append(const fs::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw StudyError(500, "cannot open " + path.string());
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) {
      ::close(fd);
      throw StudyError(500, "write failed for " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) throw StudyError(500, "fsync failed for " + path.string());
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StudyError(404, "media not found");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json study_to_json(const Study& s) {
  json cases = json::array();
  for (const auto& c : s.cases) cases.push_back({{"id", c.id}, {"cohorts", c.cohorts}, {"perm", c.perm}});
  return {{"id", s.id},         {"methods", s.methods}, {"target", s.target}, {"seed", s.seed},
          {"raters", s.raters}, {"tokens", s.tokens},   {"cases", cases}};
}

Study study_from_json(const json& j) {
  Study s;
  s.id = j.at("id");
  s.methods = j.at("methods").get<std::vector<std::string>>();
  s.target = j.at("target");
  s.seed = j.at("seed");
  s.raters = j.at("raters").get<std::vector<std::string>>();
  s.tokens = j.at("tokens").get<std::map<std::string, std::string>>();
  for (const auto& c : j.at("cases"))
    s.cases.push_back({c.at("id"), c.at("cohorts").get<std::map<std::string, std::string>>(),
                       c.at("perm").get<std::array<int, 3>>()});
  return s;
}

json case_payload(const Study& s, int index, const std::string& rater,
                  const std::map<std::pair<int, std::string>, int>& voted) {
  const std::string base = "/studies/" + s.id + "/cases/" + std::to_string(index);
  json slots = json::array();
  for (int k = 0; k < 3; ++k) slots.push_back({{"slot", kSlots[k]}, {"image", base + "/images/" + kSlots[k]}});
  json vote = nullptr;
  if (auto it = voted.find({index, rater}); it != voted.end()) vote = kSlots[it->second];
  json next = nullptr;
  int done = 0;
  for (int i = 0; i < static_cast<int>(s.cases.size()); ++i) {
    if (voted.count({i, rater}))
      ++done;
    else if (next.is_null())
      next = i;
  }
  return {{"study", s.id},
          {"rater", rater},
          {"index", index},
          {"total", s.cases.size()},
          {"ground_truth", {{"label", "Ground Truth"}, {"image", base + "/images/gt"}}},
          {"slots", slots},
          {"vote", vote},
          {"voted_count", done},
          {"next_unvoted", next}};
}

bool valid_id(const std::string& s) {
  static const std::regex re("[A-Za-z0-9_.-]+");
  return !s.empty() && std::regex_match(s, re);
}

}  // namespace

StudyStore::StudyStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
  std::vector<fs::path> dirs;
  for (const auto& d : fs::directory_iterator(root_))
    if (d.is_directory() && fs::exists(d.path() / "study.json")) dirs.push_back(d.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) load(d);
}

void StudyStore::load(const fs::path& dir) {
  auto e = std::make_unique<Entry>();
  try {
    e->def = study_from_json(json::parse(read_text_file(dir / "study.json")));
  } catch (const json::exception& ex) {
    throw FormatError(dir.string() + "/study.json: " + ex.what());
  }
  const fs::path log = dir / "votes.log";
  if (fs::exists(log)) {
    const std::string text = read_text_file(log);
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) break;  // torn final write, never acknowledged
      const json v = json::parse(text.substr(pos, nl - pos));
      StoredVote sv{v.at("index"), v.at("rater"), slot_index(v.at("slot")), v.at("timestamp")};
      e->voted[{sv.case_index, sv.rater}] = sv.slot;
      e->votes.push_back(std::move(sv));
      pos = nl + 1;
    }
  }
  const std::string& id = e->def.id;
  if (id.rfind("study-", 0) == 0) {
    try {
      next_id_ = std::max(next_id_, std::stoi(id.substr(6)) + 1);
    } catch (const std::exception&) {
    }
  }
  studies_[id] = std::move(e);
}

json StudyStore::create_study(const json& req) {
  if (!req.is_object()) throw bad_request("request must be a JSON object");
  auto e = std::make_unique<Entry>();
  Study& s = e->def;
  try {
    s.methods = req.at("methods").get<std::vector<std::string>>();
    s.seed = req.value("seed", std::uint64_t{0});
    s.raters = req.at("raters").get<std::vector<std::string>>();
    s.target = req.value("target", s.methods.empty() ? std::string() : s.methods.front());
  } catch (const json::exception& ex) {
    throw bad_request(std::string("malformed study request: ") + ex.what());
  }
  if (s.methods.size() != 3)
    throw bad_request("a study requires exactly 3 methods, got " + std::to_string(s.methods.size()));
  if (std::set<std::string>(s.methods.begin(), s.methods.end()).size() != 3)
    throw bad_request("method names must be distinct");
  for (const auto& m : s.methods)
    if (m.size() < 2) throw bad_request("method names must have at least two characters");
  if (std::find(s.methods.begin(), s.methods.end(), s.target) == s.methods.end())
    throw bad_request("target '" + s.target + "' is not one of the methods");
  if (s.raters.empty()) throw bad_request("at least one rater is required");
  if (std::set<std::string>(s.raters.begin(), s.raters.end()).size() != s.raters.size())
    throw bad_request("rater ids must be distinct");
  for (const auto& r : s.raters)
    if (!valid_id(r)) throw bad_request("invalid rater id '" + r + "'");
  if (!req.contains("cases") || !req["cases"].is_array() || req["cases"].empty())
    throw bad_request("at least one case is required");

  struct Images {
    ComplexImage gt;
    std::array<ComplexImage, 3> by_method;
  };
  std::vector<Images> images;
  std::set<std::string> ids;
  int index = 0;
  for (const auto& c : req["cases"]) {
    StudyCaseDef def;
    Images im;
    try {
      def.id = c.at("id");
      def.cohorts = c.value("cohorts", std::map<std::string, std::string>{});
      if (!ids.insert(def.id).second) throw bad_request("duplicate case id '" + def.id + "'");
      const auto& imgs = c.at("images");
      if (imgs.size() != 3) throw bad_request("case '" + def.id + "' needs exactly one image per method");
      im.gt = read_image(c.at("ground_truth").get<std::string>());
      for (int m = 0; m < 3; ++m) {
        if (!imgs.contains(s.methods[m]))
          throw bad_request("case '" + def.id + "' has no image for method '" + s.methods[m] + "'");
        im.by_method[m] = read_image(imgs[s.methods[m]].get<std::string>());
        if (im.by_method[m].rows() != im.gt.rows() || im.by_method[m].cols() != im.gt.cols())
          throw bad_request("case '" + def.id + "': image shape differs from ground truth");
      }
    } catch (const json::exception& ex) {
      throw bad_request(std::string("malformed case entry: ") + ex.what());
    } catch (const FormatError& ex) {
      throw bad_request(std::string("missing or unreadable image: ") + ex.what());
    }
    def.perm = case_permutation(s.seed, index++);
    s.cases.push_back(std::move(def));
    images.push_back(std::move(im));
  }

  std::unique_lock lock(mutex_);
  s.id = req.contains("id") ? req["id"].get<std::string>() : "study-" + std::to_string(next_id_);
  if (!valid_id(s.id)) throw bad_request("invalid study id '" + s.id + "'");
  if (studies_.count(s.id)) throw StudyError(409, "study '" + s.id + "' already exists");
  json tokens = json::object();
  for (const auto& r : s.raters) {
    const std::string tok = new_token();
    s.tokens[tok] = r;
    tokens[r] = tok;
  }

  // Blinding check over every payload this study can produce.
  for (int i = 0; i < static_cast<int>(s.cases.size()); ++i)
    for (const auto& r : s.raters) {
      const std::string body = case_payload(s, i, r, {}).dump();
      for (const auto& m : s.methods)
        if (body.find(m) != std::string::npos)
          throw bad_request("method name '" + m + "' collides with study, case or rater identifiers");
    }

  const fs::path dir = root_ / s.id;
  fs::create_directories(dir / "media");
  for (std::size_t i = 0; i < s.cases.size(); ++i) {
    const RealImage gt = images[i].gt.abs();
    const double scale = gt.maxCoeff();
    const std::string stem = (dir / "media" / std::to_string(i)).string();
    write_text_file(stem + "_gt.png", encode_png16(gt, scale));
    for (int k = 0; k < 3; ++k)
      write_text_file(stem + "_" + kSlots[k] + ".png",
                      encode_png16(images[i].by_method[s.cases[i].perm[k]].abs(), scale));
  }
  write_text_file(dir / "study.json", study_to_json(s).dump(2) + "\n");
  if (s.id.rfind("study-", 0) == 0) ++next_id_;
  const std::string id = s.id;
  const auto total = s.cases.size();
  studies_[id] = std::move(e);
  return {{"id", id}, {"tokens", tokens}, {"total", total}};
}

const StudyStore::Entry& StudyStore::entry(const std::string& id) const {
  const auto it = studies_.find(id);
  if (it == studies_.end()) throw StudyError(404, "unknown study '" + id + "'");
  return *it->second;
}

const Study& StudyStore::study(const std::string& id) const {
  std::lock_guard lock(mutex_);
  return entry(id).def;
}

const std::string& StudyStore::rater_for(const Entry& e, const std::string& token) const {
  const auto it = e.def.tokens.find(token);
  if (token.empty() || it == e.def.tokens.end()) throw StudyError(401, "unknown or missing rater token");
  return it->second;
}

json StudyStore::get_case(const std::string& study, int index, const std::string& token) const {
  std::lock_guard lock(mutex_);
  const Entry& e = entry(study);
  const std::string& rater = rater_for(e, token);
  if (index < 0 || index >= static_cast<int>(e.def.cases.size()))
    throw StudyError(404, "case index out of range");
  return case_payload(e.def, index, rater, e.voted);
}

std::string StudyStore::get_media(const std::string& study, int index, const std::string& which) const {
  fs::path path;
  {
    std::lock_guard lock(mutex_);
    const Entry& e = entry(study);
    if (index < 0 || index >= static_cast<int>(e.def.cases.size()))
      throw StudyError(404, "case index out of range");
    if (which != "gt" && slot_index(which) < 0) throw StudyError(404, "unknown image '" + which + "'");
    path = root_ / study / "media" / (std::to_string(index) + "_" + which + ".png");
  }
  return read_bytes(path);
}

json StudyStore::post_vote(const std::string& study, const std::string& token, int index,
                           const std::string& slot) {
  std::lock_guard lock(mutex_);
  const auto it = studies_.find(study);
  if (it == studies_.end()) throw StudyError(404, "unknown study '" + study + "'");
  Entry& e = *it->second;
  const std::string rater = rater_for(e, token);
  if (index < 0 || index >= static_cast<int>(e.def.cases.size()))
    throw StudyError(404, "case index out of range");
  const int k = slot_index(slot);
  if (k < 0) throw bad_request("invalid slot '" + slot + "'; expected A, B or C");
  if (e.voted.count({index, rater}))
    throw StudyError(409, "rater has already voted on case " + std::to_string(index));
  StoredVote v{index, rater, k, utc_now()};
  const json line = {{"index", index}, {"rater", rater}, {"slot", slot}, {"timestamp", v.timestamp}};
  durable_append(root_ / study / "votes.log", line.dump() + "\n");
  e.voted[{index, rater}] = k;
  e.votes.push_back(std::move(v));
  json next = nullptr;
  for (int i = 0; i < static_cast<int>(e.def.cases.size()); ++i)
    if (!e.voted.count({i, rater})) {
      next = i;
      break;
    }
  return {{"status", "recorded"}, {"index", index}, {"slot", slot}, {"next_unvoted", next}};
}

std::vector<VoteRecord> StudyStore::votes(const std::string& study) const {
  std::lock_guard lock(mutex_);
  const Entry& e = entry(study);
  std::vector<VoteRecord> out;
  for (const auto& v : e.votes) {
    const auto& c = e.def.cases[v.case_index];
    out.push_back({c.id, v.rater, e.def.methods[c.perm[v.slot]], c.cohorts});
  }
  return out;
}

json StudyStore::summary(const std::string& study, const std::string& target) const {
  std::string t = target;
  int methods = 3;
  {
    std::lock_guard lock(mutex_);
    const Entry& e = entry(study);
    if (t.empty()) t = e.def.target;
    methods = static_cast<int>(e.def.methods.size());
  }
  return to_json(summarize_votes(votes(study), t, methods));
}

std::string StudyStore::votes_csv(const std::string& study) const { return votes_to_csv(votes(study)); }

struct StudyServer::Impl {
  httplib::Server http;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string bearer(const httplib::Request& req) {
  const std::string h = req.get_header_value("Authorization");
  const std::string prefix = "Bearer ";
  return h.rfind(prefix, 0) == 0 ? h.substr(prefix.size()) : std::string();
}

int parse_index(const std::string& s) {
  try {
    return std::stoi(s);
  } catch (const std::exception&) {
    throw StudyError(404, "case index out of range");
  }
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const StudyError& e) {
      send_json(res, e.status, {{"error", e.what()}});
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
    } catch (const DomainError& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", e.what()}});
    }
  };
}

}  // namespace

StudyServer::StudyServer(fs::path root)
    : store_(std::make_unique<StudyStore>(std::move(root))), impl_(std::make_unique<Impl>()) {
  auto& http = impl_->http;
  StudyStore& store = *store_;
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                            {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                            {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  http.Post("/studies", guarded([&store](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 201, store.create_study(json::parse(req.body)));
            }));
  http.Get(R"(/studies/([^/]+)/cases/(\d+))",
           guarded([&store](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, store.get_case(req.matches[1], parse_index(req.matches[2]), bearer(req)));
           }));
  http.Get(R"(/studies/([^/]+)/cases/(\d+)/images/([^/]+))",
           guarded([&store](const httplib::Request& req, httplib::Response& res) {
             res.set_content(store.get_media(req.matches[1], parse_index(req.matches[2]), req.matches[3]),
                             "image/png");
           }));
  http.Post(R"(/studies/([^/]+)/votes)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
              const json body = json::parse(req.body);
              if (!body.contains("index") || !body["index"].is_number_integer())
                throw StudyError(400, "vote needs an integer 'index'");
              if (!body.contains("slot") || !body["slot"].is_string())
                throw StudyError(400, "vote needs a 'slot' of A, B or C");
              send_json(res, 200,
                        store.post_vote(req.matches[1], bearer(req), body["index"].get<int>(),
                                        body["slot"].get<std::string>()));
            }));
  http.Get(R"(/studies/([^/]+)/summary)", guarded([&store](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, store.summary(req.matches[1], req.get_param_value("target")));
           }));
  http.Get(R"(/studies/([^/]+)/votes\.csv)",
           guarded([&store](const httplib::Request& req, httplib::Response& res) {
             res.set_content(store.votes_csv(req.matches[1]), "text/csv");
           }));
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::start(const std::string& host, int port) {
  auto& http = impl_->http;
  const int bound = port == 0 ? http.bind_to_any_port(host) : (http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([&http] { http.listen_after_bind(); });
  http.wait_until_ready();
  return bound;
}

void StudyServer::run(const std::string& host, int port) {
  if (!impl_->http.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void StudyServer::stop() {
  if (impl_) impl_->http.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace padis
