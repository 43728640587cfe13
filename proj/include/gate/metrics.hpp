#pragma once

// Evaluation math. Everything here is a pure function of its inputs.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gate/core.hpp"
#include "gate/prediction.hpp"

namespace gate::metrics {

/// Reference value only: mean per-question entropy across human participants.
inline constexpr double kReportedMeanQuestionEntropyBits = 0.77;

struct ObjectiveWeights {
  double alpha = 1.0;
  double beta = 1.0;
};

inline void validate(const ObjectiveWeights& w) {
  if (!(w.alpha >= 0.0) || !(w.beta >= 0.0)) throw Error(Errc::invalid_argument, "objective weights must be >= 0");
  if (w.alpha == 0.0 && w.beta == 0.0) throw Error(Errc::invalid_argument, "objective weights cannot both be zero");
}

struct CurvePoint {
  double coordinate = 0.0;
  double value = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

/// Mean change against the cutoff-0 baseline; always starts at (0, 0).
struct DeltaCurve {
  CurveAxis axis = CurveAxis::minutes;
  std::vector<CurvePoint> points;
  bool operator==(const DeltaCurve&) const = default;
};

inline void validate(const DeltaCurve& c) {
  if (c.points.empty() || c.points.front().coordinate != 0.0 || c.points.front().value != 0.0)
    throw Error(Errc::invalid_argument, "curve must start at (0, 0)");
  for (std::size_t i = 1; i < c.points.size(); ++i)
    if (!(c.points[i].coordinate > c.points[i - 1].coordinate))
      throw Error(Errc::invalid_argument, "curve coordinates must strictly increase");
}

inline double p_correct(double prob_yes, Answer label) {
  if (!(prob_yes >= 0.0 && prob_yes <= 1.0)) throw Error(Errc::invalid_argument, "prob_yes outside [0, 1]");
  return label == Answer::yes ? prob_yes : 1.0 - prob_yes;
}

namespace detail {

using ItemProbs = std::map<std::string, double>;

struct GroupedRecords {
  CurveAxis axis = CurveAxis::minutes;
  std::map<std::int64_t, ItemProbs> by_cutoff;
};

inline GroupedRecords group(std::span<const PredictionRecord> records) {
  GroupedRecords g;
  if (records.empty()) throw Error(Errc::insufficient_data, "no prediction records");
  g.axis = records.front().cutoff.axis;
  for (const auto& r : records) {
    if (r.cutoff.axis != g.axis) throw Error(Errc::invalid_argument, "records mix minute and turn cutoffs");
    if (!g.by_cutoff[r.cutoff.value].emplace(r.item_id, r.prob_yes).second)
      throw Error(Errc::invalid_argument, "duplicate record for item \"" + r.item_id + "\"");
  }
  if (!g.by_cutoff.count(0)) throw Error(Errc::insufficient_data, "records lack the cutoff-0 baseline");
  if (g.by_cutoff.size() < 2) throw Error(Errc::insufficient_data, "records need at least one cutoff after baseline");
  return g;
}

inline std::map<std::string, Answer> label_map(std::span<const Judgment> judgments, const ItemProbs& baseline) {
  std::map<std::string, Answer> labels;
  for (const auto& j : judgments) {
    if (!baseline.count(j.item_id))
      throw Error(Errc::invalid_argument, "judgment for item \"" + j.item_id + "\" has no prediction");
    labels[j.item_id] = j.answer;
  }
  if (labels.empty()) throw Error(Errc::insufficient_data, "no judged items");
  return labels;
}

inline double coordinate(CurveAxis axis, std::int64_t value) { return Cutoff{axis, value}.coordinate(); }

}  // namespace detail

/// Items without a judgment are left out of every mean.
inline DeltaCurve delta_curve(std::span<const PredictionRecord> records, std::span<const Judgment> judgments) {
  const auto g = detail::group(records);
  const auto& baseline = g.by_cutoff.at(0);
  const auto labels = detail::label_map(judgments, baseline);
  DeltaCurve curve{g.axis, {{0.0, 0.0}}};
  for (const auto& [cutoff, probs] : g.by_cutoff) {
    if (cutoff == 0) continue;
    double sum = 0.0;
    for (const auto& [item, label] : labels) {
      const auto it = probs.find(item);
      if (it == probs.end()) throw Error(Errc::invalid_argument, "item \"" + item + "\" missing at a cutoff");
      sum += p_correct(it->second, label) - p_correct(baseline.at(item), label);
    }
    curve.points.push_back({detail::coordinate(g.axis, cutoff), sum / static_cast<double>(labels.size())});
  }
  return curve;
}

/// Trapezoidal area over [0, horizon]; the final value is held flat out to
/// the horizon when the curve stops short of it.
inline double auc(const DeltaCurve& curve, double horizon) {
  validate(curve);
  if (horizon < curve.points.back().coordinate)
    throw Error(Errc::invalid_argument, "horizon precedes the last curve point");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.coordinate - a.coordinate) * (a.value + b.value) / 2.0;
  }
  area += (horizon - curve.points.back().coordinate) * curve.points.back().value;
  return area;
}

/// Mann-Whitney form: P(random positive scores above random negative), ties ½.
inline double auroc(std::span<const double> prob_yes, std::span<const Answer> labels) {
  if (prob_yes.size() != labels.size()) throw Error(Errc::invalid_argument, "probabilities and labels differ in length");
  const std::size_t n = prob_yes.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return prob_yes[a] < prob_yes[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && prob_yes[order[j]] == prob_yes[order[i]]) ++j;
    // Ranks i+1 .. j share their midrank.
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == Answer::yes) {
        positive_rank_sum += midrank;
        ++positives;
      }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw Error(Errc::single_class, "AUROC needs both yes and no labels");
  const double np = static_cast<double>(positives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

/// AUROC-change curve against the cutoff-0 baseline.
inline DeltaCurve delta_auroc_curve(std::span<const PredictionRecord> records, std::span<const Judgment> judgments) {
  const auto g = detail::group(records);
  const auto& baseline = g.by_cutoff.at(0);
  const auto labels = detail::label_map(judgments, baseline);
  auto score = [&](const detail::ItemProbs& probs) {
    std::vector<double> p;
    std::vector<Answer> y;
    for (const auto& [item, label] : labels) {
      const auto it = probs.find(item);
      if (it == probs.end()) throw Error(Errc::invalid_argument, "item \"" + item + "\" missing at a cutoff");
      p.push_back(it->second);
      y.push_back(label);
    }
    return auroc(p, y);
  };
  const double base = score(baseline);
  DeltaCurve curve{g.axis, {{0.0, 0.0}}};
  for (const auto& [cutoff, probs] : g.by_cutoff)
    if (cutoff != 0) curve.points.push_back({detail::coordinate(g.axis, cutoff), score(probs) - base});
  return curve;
}

/// Bernoulli entropy in bits, with 0·log 0 = 0.
inline double question_entropy(double yes_fraction) {
  if (!(yes_fraction >= 0.0 && yes_fraction <= 1.0)) throw Error(Errc::invalid_argument, "fraction outside [0, 1]");
  auto term = [](double p) { return p > 0.0 ? -p * std::log2(p) : 0.0; };
  return term(yes_fraction) + term(1.0 - yes_fraction);
}

/// Fraction of "yes" per item over a group of sessions' judgments.
inline std::map<std::string, double> yes_fractions(std::span<const Session> sessions) {
  std::map<std::string, std::pair<int, int>> counts;
  for (const auto& s : sessions)
    for (const auto& j : s.judgments) {
      auto& [yes, total] = counts[j.item_id];
      yes += j.answer == Answer::yes ? 1 : 0;
      ++total;
    }
  std::map<std::string, double> out;
  for (const auto& [item, c] : counts) out[item] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return out;
}

/// Mean per-item entropy of the yes/no split across sessions.
inline double mean_question_entropy(std::span<const Session> sessions) {
  const auto fractions = yes_fractions(sessions);
  if (fractions.empty()) throw Error(Errc::insufficient_data, "no judgments");
  double sum = 0.0;
  for (const auto& [_, f] : fractions) sum += question_entropy(f);
  return sum / static_cast<double>(fractions.size());
}

struct ShiftPoint {
  std::string item_id;
  double fraction_yes_a = 0.0;
  double fraction_yes_b = 0.0;
  bool operator==(const ShiftPoint&) const = default;
};

/// One (group A, group B) yes-fraction pair per item judged by both groups.
inline std::vector<ShiftPoint> preference_shift(std::span<const Session> group_a, std::span<const Session> group_b) {
  if (group_a.empty() || group_b.empty()) throw Error(Errc::insufficient_data, "both groups need sessions");
  const auto a = yes_fractions(group_a);
  const auto b = yes_fractions(group_b);
  std::vector<ShiftPoint> out;
  for (const auto& [item, fa] : a)
    if (auto it = b.find(item); it != b.end()) out.push_back({item, fa, it->second});
  if (out.empty()) throw Error(Errc::invalid_argument, "groups judged disjoint test sets");
  return out;
}

/// Pearson correlation over the methods present in both maps.
inline double method_correlation(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  std::vector<double> x, y;
  for (const auto& [method, va] : a)
    if (auto it = b.find(method); it != b.end()) {
      if (!std::isfinite(va) || !std::isfinite(it->second))
        throw Error(Errc::invalid_argument, "non-finite metric for method \"" + method + "\"");
      x.push_back(va);
      y.push_back(it->second);
    }
  if (x.size() < 2) throw Error(Errc::insufficient_data, "need at least two methods in common");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(Errc::zero_variance, "a metric is constant across methods");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double weighted_objective(const ObjectiveWeights& w, double cost, double alignment_error) {
  validate(w);
  if (cost < 0.0 || alignment_error < 0.0) throw Error(Errc::invalid_argument, "cost and error must be >= 0");
  return w.alpha * cost + w.beta * alignment_error;
}

/// Words the user typed into answered turns.
inline double specification_cost_words(const Transcript& transcript) {
  std::size_t words = 0;
  for (const auto& t : transcript)
    if (t.answered()) words += gate::detail::count_words(t.answer_text);
  return static_cast<double>(words);
}

/// Mean |f(x) - f̂(x)| over judged items, i.e. mean (1 - p_correct).
inline double alignment_error(std::span<const PredictionRecord> records_at_one_cutoff,
                              std::span<const Judgment> judgments) {
  std::map<std::string, Answer> labels;
  for (const auto& j : judgments) labels[j.item_id] = j.answer;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records_at_one_cutoff)
    if (auto it = labels.find(r.item_id); it != labels.end()) {
      sum += 1.0 - p_correct(r.prob_yes, it->second);
      ++n;
    }
  if (n == 0) throw Error(Errc::insufficient_data, "no judged predictions");
  return sum / static_cast<double>(n);
}

/// Pointwise mean of curves that share their coordinates.
inline DeltaCurve average_curves(std::span<const DeltaCurve> curves) {
  if (curves.empty()) throw Error(Errc::insufficient_data, "no curves to average");
  DeltaCurve out = curves.front();
  for (std::size_t c = 1; c < curves.size(); ++c) {
    const auto& other = curves[c];
    if (other.axis != out.axis || other.points.size() != out.points.size())
      throw Error(Errc::invalid_argument, "curves do not share coordinates");
    for (std::size_t i = 0; i < out.points.size(); ++i) {
      if (other.points[i].coordinate != out.points[i].coordinate)
        throw Error(Errc::invalid_argument, "curves do not share coordinates");
      out.points[i].value += other.points[i].value;
    }
  }
  for (auto& p : out.points) p.value /= static_cast<double>(curves.size());
  return out;
}

/// Value of the curve at its last point (e.g. Δp(correct) after 5 turns).
inline double final_value(const DeltaCurve& c) {
  validate(c);
  return c.points.back().value;
}

// ---------------------------------------------------------------------------
// Output

inline void to_json(nlohmann::json& j, const CurvePoint& p) { j = nlohmann::json::array({p.coordinate, p.value}); }
inline void from_json(const nlohmann::json& j, CurvePoint& p) {
  p.coordinate = j.at(0).get<double>();
  p.value = j.at(1).get<double>();
}

inline void to_json(nlohmann::json& j, const DeltaCurve& c) {
  j = {{"axis", to_string(c.axis)}, {"points", c.points}};
}
inline void from_json(const nlohmann::json& j, DeltaCurve& c) {
  c.axis = parse_curve_axis(j.at("axis").get<std::string>());
  c.points = j.at("points").get<std::vector<CurvePoint>>();
}

inline void to_json(nlohmann::json& j, const ShiftPoint& p) {
  j = {{"item_id", p.item_id}, {"fraction_yes_a", p.fraction_yes_a}, {"fraction_yes_b", p.fraction_yes_b}};
}

/// RFC 4180 quoting for fields holding commas, quotes or line breaks.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_curve_csv(std::ostream& out, const std::string& label, const DeltaCurve& c) {
  out.precision(17);
  for (const auto& p : c.points) out << csv_field(label) << ',' << to_string(c.axis) << ',' << p.coordinate << ',' << p.value << '\n';
}

inline void write_shift_csv(std::ostream& out, std::span<const ShiftPoint> points) {
  out.precision(17);
  out << "item_id,fraction_yes_a,fraction_yes_b\n";
  for (const auto& p : points) out << csv_field(p.item_id) << ',' << p.fraction_yes_a << ',' << p.fraction_yes_b << '\n';
}

}  // namespace gate::metrics
