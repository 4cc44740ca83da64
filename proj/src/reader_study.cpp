#include "padis/reader_study.hpp"

#include "padis/core.hpp"
#include "padis/table.hpp"

#include <cstdio>
#include <set>

namespace padis {

namespace {

ProportionRow make_row(std::string label, VoteTally tally, double p0, double confidence) {
  ProportionRow row;
  row.label = std::move(label);
  row.tally = tally;
  row.p0 = p0;
  if (tally.total > 0) {
    row.ci = wilson_ci(tally, confidence);
    row.p_value = exact_binomial_onesided(tally, p0);
  }
  row.significant = tally.total > 0 && row.p_value < kSignificanceLevel;
  return row;
}

// Strict-majority null for any rater count (majority_null_p0 requires odd).
double majority_p0(int raters, int methods) {
  if (raters % 2 == 1) return majority_null_p0(raters, methods);
  if (methods == 1) return 1.0;
  return exact_binomial_onesided({raters / 2 + 1, raters}, 1.0 / methods);
}

nlohmann::json row_json(const ProportionRow& r) {
  return {{"label", r.label},
          {"picks", r.tally.picks},
          {"total", r.tally.total},
          {"proportion", r.tally.total > 0 ? r.tally.proportion() : 0.0},
          {"ci_lower", r.ci.lower},
          {"ci_upper", r.ci.upper},
          {"p0", r.p0},
          {"p_value", r.p_value},
          {"significant", r.significant}};
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

}  // namespace

ReaderSummary summarize_votes(const std::vector<VoteRecord>& votes, const std::string& target,
                              int num_methods, double confidence) {
  if (num_methods < 1) throw DomainError("summarize_votes: need at least one method");
  ReaderSummary s;
  s.target = target;
  s.num_methods = num_methods;
  s.num_votes = static_cast<int>(votes.size());

  std::map<std::string, VoteTally> per_rater;
  struct CaseAcc {
    int target_votes = 0;
    int votes = 0;
    std::map<std::string, std::string> cohorts;
  };
  std::map<std::string, CaseAcc> per_case;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& v : votes) {
    if (!seen.insert({v.case_id, v.rater_id}).second)
      throw DomainError("duplicate vote for case '" + v.case_id + "' by rater '" + v.rater_id + "'");
    const bool hit = v.choice == target;
    auto& rt = per_rater[v.rater_id];
    rt.total += 1;
    rt.picks += hit ? 1 : 0;
    auto& c = per_case[v.case_id];
    c.votes += 1;
    c.target_votes += hit ? 1 : 0;
    for (const auto& [k, val] : v.cohorts) c.cohorts[k] = val;
  }
  s.num_cases = static_cast<int>(per_case.size());

  for (const auto& [rater, tally] : per_rater)
    s.raters.push_back(make_row(rater, tally, 1.0 / num_methods, confidence));

  const int raters = static_cast<int>(per_rater.size());
  const double p0_major = raters > 0 ? majority_p0(raters, num_methods) : 0.5;
  VoteTally major;
  std::map<std::string, VoteTally> cohort_tally;
  for (const auto& [id, c] : per_case) {
    const bool won = 2 * c.target_votes > c.votes;
    major.total += 1;
    major.picks += won ? 1 : 0;
    for (const auto& [k, val] : c.cohorts) {
      auto& t = cohort_tally[k + "=" + val];
      t.total += 1;
      t.picks += won ? 1 : 0;
    }
  }
  s.majority = make_row("majority", major, p0_major, confidence);
  for (const auto& [label, tally] : cohort_tally)
    s.cohorts.push_back(make_row(label, tally, p0_major, confidence));
  return s;
}

nlohmann::json to_json(const ReaderSummary& s) {
  nlohmann::json raters = nlohmann::json::array();
  for (const auto& r : s.raters) raters.push_back(row_json(r));
  nlohmann::json cohorts = nlohmann::json::array();
  for (const auto& r : s.cohorts) cohorts.push_back(row_json(r));
  return {{"target", s.target},   {"num_methods", s.num_methods}, {"num_cases", s.num_cases},
          {"num_votes", s.num_votes}, {"majority", row_json(s.majority)}, {"cohorts", cohorts},
          {"raters", raters}};
}

std::string to_markdown(const ReaderSummary& s) {
  ResultTable t;
  t.columns = {"Cohort", "Picks/Total", "Prop.", "95% CI", "p-value"};
  auto add = [&](std::string label, const ProportionRow& r) {
    const std::string star = r.significant ? "*" : "";
    t.add_row({std::move(label), std::to_string(r.tally.picks) + "/" + std::to_string(r.tally.total),
               pct(r.tally.total ? r.tally.proportion() : 0.0) + "%" + star,
               "[" + pct(r.ci.lower) + ", " + pct(r.ci.upper) + "]%", r.p_value});
  };
  add("Majority (strict, target = " + s.target + ")", s.majority);
  for (const auto& r : s.cohorts) add(r.label + " (n=" + std::to_string(r.tally.total) + ")", r);
  for (const auto& r : s.raters) add("Rater " + r.label, r);
  t.markdown_precision = {-1, -1, -1, -1, 6};
  return to_markdown(t) + "\nStars mark p < 0.001 (one-sided exact binomial). Majority and cohort rows use p0 = " +
         format_csv_double(s.majority.p0) + "; rater rows use p0 = " +
         format_csv_double(1.0 / s.num_methods) + ".\n";
}

std::vector<VoteRecord> parse_votes_csv(const std::string& text) {
  const CsvDocument doc = parse_csv(text);
  auto col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < doc.header.size(); ++i)
      if (doc.header[i] == name) return i;
    throw FormatError("votes csv: missing column '" + name + "'");
  };
  const auto ci = col("case_id");
  const auto ri = col("rater_id");
  const auto chi = col("choice");
  std::vector<std::pair<std::size_t, std::string>> cohort_cols;
  const std::string prefix = "cohort_";
  for (std::size_t i = 0; i < doc.header.size(); ++i)
    if (doc.header[i].rfind(prefix, 0) == 0) cohort_cols.push_back({i, doc.header[i].substr(prefix.size())});

  std::vector<VoteRecord> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& row : doc.rows) {
    VoteRecord v{row[ci], row[ri], row[chi], {}};
    for (const auto& [i, key] : cohort_cols)
      if (!row[i].empty()) v.cohorts[key] = row[i];
    if (!seen.insert({v.case_id, v.rater_id}).second)
      throw DomainError("votes csv: duplicate vote for case '" + v.case_id + "' by rater '" +
                        v.rater_id + "'");
    out.push_back(std::move(v));
  }
  return out;
}

std::string votes_to_csv(const std::vector<VoteRecord>& votes) {
  std::set<std::string> keys;
  for (const auto& v : votes)
    for (const auto& [k, _] : v.cohorts) keys.insert(k);
  ResultTable t;
  t.columns = {"case_id", "rater_id", "choice"};
  for (const auto& k : keys) t.columns.push_back("cohort_" + k);
  for (const auto& v : votes) {
    std::vector<Cell> row{v.case_id, v.rater_id, v.choice};
    for (const auto& k : keys) {
      const auto it = v.cohorts.find(k);
      row.emplace_back(it == v.cohorts.end() ? std::string() : it->second);
    }
    t.add_row(std::move(row));
  }
  return to_csv(t);
}

}  // namespace padis
