#pragma once

// Blinded forced-choice reader study: study store, persistence and the HTTP
// front end. HTTP routes are listed in docs/formats.md.
//
// On disk, one directory per study under the store root:
//   study.json   definition snapshot (cases, methods, permutations, raters)
//   votes.log    append-only JSON lines, fsync'ed before acknowledgement
//   media/       16-bit PNGs, `<case>_gt.png` and `<case>_<slot>.png`

#include "padis/core.hpp"
#include "padis/reader_study.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace padis {

/// Error carrying the HTTP status it maps to.
struct StudyError : Error {
  StudyError(int status, const std::string& what) : Error(what), status(status) {}
  int status;
};

inline constexpr const char* kSlots[] = {"A", "B", "C"};

struct StudyCaseDef {
  std::string id;
  std::map<std::string, std::string> cohorts;
  /// perm[slot] = index into Study::methods.
  std::array<int, 3> perm{};
};

struct Study {
  std::string id;
  std::vector<std::string> methods;  // exactly 3
  std::string target;
  std::uint64_t seed = 0;
  std::vector<StudyCaseDef> cases;
  std::map<std::string, std::string> tokens;  // token -> rater id
  std::vector<std::string> raters;
};

struct StoredVote {
  int case_index = 0;
  std::string rater;
  int slot = 0;
  std::string timestamp;
};

/// Slot permutation of case `index` for a study seed.
std::array<int, 3> case_permutation(std::uint64_t seed, int index);

class StudyStore {
 public:
  /// Loads every study found under `root`, replaying the votes logs.
  explicit StudyStore(std::filesystem::path root);

  /// Request: {"id"?, "seed", "methods": [3 names], "target"?, "raters": [...],
  ///           "cases": [{"id", "ground_truth": dir, "images": {method: dir}, "cohorts"?}]}.
  /// Image paths name image containers readable by the server. Returns
  /// {"id", "tokens": {rater: token}}.
  nlohmann::json create_study(const nlohmann::json& request);

  /// Case payload for the rater owning `token`. Never names methods.
  nlohmann::json get_case(const std::string& study, int index, const std::string& token) const;
  /// PNG bytes for "gt" or a slot letter.
  std::string get_media(const std::string& study, int index, const std::string& which) const;
  nlohmann::json post_vote(const std::string& study, const std::string& token, int index,
                           const std::string& slot);
  nlohmann::json summary(const std::string& study, const std::string& target = "") const;
  std::vector<VoteRecord> votes(const std::string& study) const;
  std::string votes_csv(const std::string& study) const;

  const Study& study(const std::string& id) const;

 private:
  struct Entry {
    Study def;
    std::vector<StoredVote> votes;
    std::map<std::pair<int, std::string>, int> voted;  // (case, rater) -> slot
  };

  const Entry& entry(const std::string& id) const;
  const std::string& rater_for(const Entry& e, const std::string& token) const;
  void load(const std::filesystem::path& dir);

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Entry>> studies_;
  int next_id_ = 1;
};

/// HTTP+JSON front end over a StudyStore.
class StudyServer {
 public:
  explicit StudyServer(std::filesystem::path root);
  ~StudyServer();

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  StudyStore& store() { return *store_; }

 private:
  struct Impl;
  std::unique_ptr<StudyStore> store_;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace padis
