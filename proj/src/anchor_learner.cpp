#include "ngd/anchor_learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "ngd/count_provider.hpp"
#include "ngd/distance.hpp"
#include "ngd/error.hpp"

namespace ngd {

namespace {

// Sort rows by (label, features) so training order cannot leak into folds or SMO ties.
std::vector<Eigen::Index> canonical_order(const Eigen::MatrixXd& x, std::span<const int> labels) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (labels[static_cast<std::size_t>(a)] != labels[static_cast<std::size_t>(b)])
      return labels[static_cast<std::size_t>(a)] < labels[static_cast<std::size_t>(b)];
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (x(a, c) != x(b, c)) return x(a, c) < x(b, c);
    return false;
  });
  return order;
}

struct Reordered {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Reordered reorder(const Eigen::MatrixXd& x, std::span<const int> labels) {
  const auto order = canonical_order(x, labels);
  Reordered r{Eigen::MatrixXd(x.rows(), x.cols()), {}};
  for (std::size_t i = 0; i < order.size(); ++i) {
    r.x.row(static_cast<Eigen::Index>(i)) = x.row(order[i]);
    r.y.push_back(labels[static_cast<std::size_t>(order[i])]);
  }
  return r;
}

// Stratified fold ids over canonically ordered rows.
std::vector<std::size_t> fold_ids(std::span<const int> y, std::size_t folds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> ids(y.size());
  std::size_t offset = 0;
  for (int cls : {-1, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) ids[members[k]] = (offset + k) % folds;
    offset += members.size();
  }
  return ids;
}

double cv_on_canonical(const Reordered& data, const SvmParams& params, std::size_t folds, std::uint64_t seed) {
  const std::size_t n = data.y.size();
  folds = std::clamp<std::size_t>(folds, 2, n);
  const auto ids = fold_ids(data.y, folds, seed);
  double total = 0;
  std::size_t used = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train_rows, test_rows;
    for (std::size_t i = 0; i < n; ++i) (ids[i] == f ? test_rows : train_rows).push_back(static_cast<Eigen::Index>(i));
    if (test_rows.empty() || train_rows.empty()) continue;
    Eigen::MatrixXd xt(static_cast<Eigen::Index>(train_rows.size()), data.x.cols());
    std::vector<int> yt;
    for (std::size_t r = 0; r < train_rows.size(); ++r) {
      xt.row(static_cast<Eigen::Index>(r)) = data.x.row(train_rows[r]);
      yt.push_back(data.y[static_cast<std::size_t>(train_rows[r])]);
    }
    const auto model = SvmModel::train(xt, yt, params);
    std::size_t correct = 0;
    for (auto r : test_rows)
      if (model.predict(data.x.row(r).transpose()) == data.y[static_cast<std::size_t>(r)]) ++correct;
    total += static_cast<double>(correct) / static_cast<double>(test_rows.size());
    ++used;
  }
  return used ? total / static_cast<double>(used) : 0.0;
}

void check_training_set(const Eigen::MatrixXd& x, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) throw Error("labels do not match feature rows");
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  const auto neg = std::count(labels.begin(), labels.end(), -1);
  if (pos + neg != static_cast<std::ptrdiff_t>(labels.size())) throw Error("labels must be +1 or -1");
  if (pos < 2 || neg < 2) throw Error("need at least two examples per class");
  if (!x.allFinite()) throw Error("features must be finite");
  bool all_same = true;
  for (Eigen::Index r = 1; r < x.rows() && all_same; ++r) all_same = x.row(r) == x.row(0);
  if (all_same) throw DegenerateFeatures();
}

}  // namespace

HyperGrid HyperGrid::defaults() {
  HyperGrid g;
  for (int e = -6; e <= 2; ++e) g.gammas.push_back(std::ldexp(1.0, e));
  for (int e = -2; e <= 6; ++e) g.costs.push_back(std::ldexp(1.0, e));
  return g;
}

Eigen::VectorXd featurize(std::string_view term, std::span<const std::string> anchors, CountProvider& provider,
                          double n, double inf_cap) {
  if (anchors.empty()) throw Error("no anchors");
  Eigen::VectorXd v(static_cast<Eigen::Index>(anchors.size()));
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    double d = 0;
    try {
      d = term_ngd(provider, term, anchors[i], n);
    } catch (const ProviderError& e) {
      throw ProviderError(fmt::format("counts for ('{}', anchor '{}'): {}", term, anchors[i], e.what()));
    }
    v(static_cast<Eigen::Index>(i)) = std::isinf(d) ? inf_cap : d;
  }
  return v;
}

double cross_validate(const Eigen::MatrixXd& x, std::span<const int> labels, const SvmParams& params,
                      std::size_t folds, std::uint64_t seed) {
  return cv_on_canonical(reorder(x, labels), params, folds, seed);
}

TrainedClassifier train_classifier(const Eigen::MatrixXd& x, std::span<const int> labels, const LearnerOptions& options) {
  check_training_set(x, labels);
  if (options.grid.gammas.empty() || options.grid.costs.empty()) throw Error("empty hyperparameter grid");
  const auto data = reorder(x, labels);

  auto costs = options.grid.costs;
  auto gammas = options.grid.gammas;
  std::sort(costs.begin(), costs.end());
  std::sort(gammas.begin(), gammas.end());

  TrainedClassifier out;
  bool have = false;
  for (double c : costs) {
    for (double g : gammas) {
      SvmParams p{g, c, options.tolerance};
      const double acc = cv_on_canonical(data, p, options.folds, options.seed);
      out.cv_table.push_back({g, c, acc});
      if (!have || acc > out.cv_accuracy) {
        have = true;
        out.cv_accuracy = acc;
        out.gamma = g;
        out.cost = c;
      }
    }
  }
  out.svm = SvmModel::train(data.x, data.y, SvmParams{out.gamma, out.cost, options.tolerance});
  return out;
}

AnchorModel train(std::span<const std::string> positives, std::span<const std::string> negatives,
                  std::span<const std::string> anchors, CountProvider& provider, const LearnerOptions& options) {
  if (positives.size() < 2 || negatives.size() < 2) throw Error("need at least two examples per class");
  const auto rows = static_cast<Eigen::Index>(positives.size() + negatives.size());
  Eigen::MatrixXd x(rows, static_cast<Eigen::Index>(anchors.size()));
  std::vector<int> y;
  Eigen::Index r = 0;
  for (const auto& t : positives) {
    x.row(r++) = featurize(t, anchors, provider, options.n, options.inf_cap).transpose();
    y.push_back(1);
  }
  for (const auto& t : negatives) {
    x.row(r++) = featurize(t, anchors, provider, options.n, options.inf_cap).transpose();
    y.push_back(-1);
  }
  AnchorModel m;
  m.anchors.assign(anchors.begin(), anchors.end());
  m.classifier = train_classifier(x, y, options);
  m.n = options.n;
  m.inf_cap = options.inf_cap;
  return m;
}

std::vector<Prediction> predict(const AnchorModel& model, std::span<const std::string> terms, CountProvider& provider) {
  std::vector<Prediction> out;
  for (const auto& t : terms) {
    Prediction p;
    p.term = t;
    try {
      const auto v = featurize(t, model.anchors, provider, model.n, model.inf_cap);
      p.margin = model.classifier.svm.decision(v);
      p.label = p.margin >= 0 ? 1 : -1;
    } catch (const Error& e) {
      p.error = e.what();
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_predictions_csv(std::ostream& out, std::span<const Prediction> predictions) {
  out << "term,label,margin\n";
  for (const auto& p : predictions) {
    std::string term = p.term;
    if (term.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : term) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      term = q + "\"";
    }
    if (p.error.empty())
      out << term << ',' << (p.label > 0 ? "+1" : "-1") << ',' << format_real(p.margin) << '\n';
    else
      out << term << ",error,\n";
  }
}

nlohmann::ordered_json AnchorModel::to_json() const {
  const auto& svm = classifier.svm;
  nlohmann::ordered_json j;
  j["anchors"] = anchors;
  j["kernel"] = "rbf";
  j["gamma"] = classifier.gamma;
  j["cost"] = classifier.cost;
  j["tolerance"] = svm.params().tolerance;
  j["cv_accuracy"] = classifier.cv_accuracy;
  j["bias"] = svm.bias();
  auto svs = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < svm.support_vectors().rows(); ++r) {
    std::vector<double> row(svm.support_vectors().row(r).begin(), svm.support_vectors().row(r).end());
    svs.push_back(row);
  }
  j["support_vectors"] = std::move(svs);
  j["coefficients"] = std::vector<double>(svm.coefficients().begin(), svm.coefficients().end());
  j["n"] = n;
  j["inf_cap"] = inf_cap;
  return j;
}

AnchorModel AnchorModel::from_json(const nlohmann::json& j) {
  try {
    AnchorModel m;
    m.anchors = j.at("anchors").get<std::vector<std::string>>();
    m.n = j.at("n").get<double>();
    m.inf_cap = j.at("inf_cap").get<double>();
    m.classifier.gamma = j.at("gamma").get<double>();
    m.classifier.cost = j.at("cost").get<double>();
    m.classifier.cv_accuracy = j.value("cv_accuracy", 0.0);
    const auto rows = j.at("support_vectors").get<std::vector<std::vector<double>>>();
    const auto coef = j.at("coefficients").get<std::vector<double>>();
    const auto dim = static_cast<Eigen::Index>(m.anchors.size());
    Eigen::MatrixXd sv(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (static_cast<Eigen::Index>(rows[r].size()) != dim) throw Error("support vector dimension mismatch");
      for (Eigen::Index c = 0; c < dim; ++c) sv(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    }
    m.classifier.svm = SvmModel::from_parts(std::move(sv), Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size())),
                                            j.at("bias").get<double>(),
                                            SvmParams{m.classifier.gamma, m.classifier.cost, j.value("tolerance", 1e-3)});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace ngd
