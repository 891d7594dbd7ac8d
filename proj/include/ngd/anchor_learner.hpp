#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "ngd/svm.hpp"

namespace ngd {

class CountProvider;

/// Kernel widths and error costs searched by cross-validation.
struct HyperGrid {
  std::vector<double> gammas;
  std::vector<double> costs;

  /// gamma in 2^-6 .. 2^2, cost in 2^-2 .. 2^6.
  static HyperGrid defaults();
};

struct CvPoint {
  double gamma = 0.0;
  double cost = 0.0;
  double accuracy = 0.0;  ///< mean fold accuracy
};

struct LearnerOptions {
  double n = 0.0;  ///< NGD normalizer
  double inf_cap = 2.0;
  std::size_t folds = 5;
  HyperGrid grid = HyperGrid::defaults();
  std::uint64_t seed = 0;
  double tolerance = 1e-3;
};

/// Entry i is NGD(term, anchors[i]) with +inf replaced by inf_cap.
Eigen::VectorXd featurize(std::string_view term, std::span<const std::string> anchors, CountProvider& provider,
                          double n, double inf_cap);

struct TrainedClassifier {
  SvmModel svm;
  double gamma = 0.0;
  double cost = 0.0;
  double cv_accuracy = 0.0;
  std::vector<CvPoint> cv_table;
};

/// Grid search with stratified k-fold cross-validation, then a final fit on
/// all rows. Rows are put in a canonical order first, so the result does not
/// depend on the order examples arrive in. Ties prefer the smaller cost, then
/// the smaller gamma.
TrainedClassifier train_classifier(const Eigen::MatrixXd& x, std::span<const int> labels, const LearnerOptions& options);

/// Mean k-fold accuracy of one grid point on canonically ordered rows.
double cross_validate(const Eigen::MatrixXd& x, std::span<const int> labels, const SvmParams& params,
                      std::size_t folds, std::uint64_t seed);

struct AnchorModel {
  std::vector<std::string> anchors;
  TrainedClassifier classifier;
  double n = 0.0;
  double inf_cap = 2.0;

  nlohmann::ordered_json to_json() const;
  static AnchorModel from_json(const nlohmann::json& j);
};

AnchorModel train(std::span<const std::string> positives, std::span<const std::string> negatives,
                  std::span<const std::string> anchors, CountProvider& provider, const LearnerOptions& options);

struct Prediction {
  std::string term;
  int label = 0;  ///< +1 / -1, 0 when featurization failed
  double margin = 0.0;
  std::string error;
};

/// Terms whose counts cannot be fetched get an error entry; the rest are classified.
std::vector<Prediction> predict(const AnchorModel& model, std::span<const std::string> terms, CountProvider& provider);

/// term,label,margin
void write_predictions_csv(std::ostream& out, std::span<const Prediction> predictions);

}  // namespace ngd
