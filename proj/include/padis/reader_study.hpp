#pragma once

// Forced-choice reader-study bookkeeping: the votes CSV and the summary
// statistics (per-rater preference, image-level majority, cohort breakdowns).
// `padis stats` and the study service both go through summarize_votes().
//
// Votes CSV: header `case_id,rater_id,choice[,cohort_<key>...]`, one row per
// vote, `choice` holding the chosen method name. LF line endings.

#include "padis/stats.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace padis {

struct VoteRecord {
  std::string case_id;
  std::string rater_id;
  std::string choice;
  std::map<std::string, std::string> cohorts;
};

struct ProportionRow {
  std::string label;
  VoteTally tally;
  Interval ci;
  double p0 = 0.0;
  double p_value = 1.0;
  bool significant = false;  // p < 0.001
};

struct ReaderSummary {
  std::string target;
  int num_methods = 3;
  int num_cases = 0;
  int num_votes = 0;
  std::vector<ProportionRow> raters;   // sorted by rater id, p0 = 1/methods
  ProportionRow majority;              // strict majority of a case's votes
  std::vector<ProportionRow> cohorts;  // "key=value", majority outcome within cohort
};

inline constexpr double kSignificanceLevel = 0.001;

ReaderSummary summarize_votes(const std::vector<VoteRecord>& votes, const std::string& target,
                              int num_methods = 3, double confidence = 0.95);

nlohmann::json to_json(const ReaderSummary& summary);

/// Markdown table of picks, totals, 95% CIs and significance stars.
std::string to_markdown(const ReaderSummary& summary);

/// Rejects duplicate (case, rater) pairs with DomainError.
std::vector<VoteRecord> parse_votes_csv(const std::string& text);
std::string votes_to_csv(const std::vector<VoteRecord>& votes);

}  // namespace padis
