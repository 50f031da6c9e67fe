#pragma once

// Perception stand-in: a small ReLU network mapping an imaging-derived
// feature vector to (CN, AD) logits, the softmax/cross-entropy pair used to
// train it, and a loader for logits produced by an external backbone.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nsad/diff_core.hpp"
#include "nsad/types.hpp"

namespace nsad {

struct PatientSample {
    PatientRecord record;
    Eigen::VectorXd imaging;  // fixed length, the configured input dimension
    std::optional<LogitPair> external_logits;
};

template <class Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Fully connected network: affine layers, ReLU between them, no output
// activation. Weights live in a ParameterStore as `mlp.<layer>.w.<row>.<col>`
// (row-major, out x in) followed by `mlp.<layer>.b.<row>`.
class MlpModel {
public:
    // dims = {input, hidden..., 2}
    explicit MlpModel(std::vector<int> dims);

    static std::vector<int> default_dims(int input_dim) { return {input_dim, 32, 16, 2}; }

    const std::vector<int>& dims() const { return dims_; }
    int input_dim() const { return dims_.front(); }
    std::size_t layer_count() const { return dims_.size() - 1; }
    std::size_t parameter_count() const;

    // Adds every mlp.* entry with Glorot-uniform weights and zero biases.
    void register_params(ParameterStore& store, std::uint64_t seed) const;

    LogitPair forward(const Eigen::VectorXd& features, const ParameterStore& params) const;

    // Rows of `inputs` are samples. Returns an N x 2 logit matrix; when
    // `activations` is given it receives every layer's post-activation output
    // (inputs first) for use by backward().
    Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs, const ParameterStore& params,
                                  std::vector<Eigen::MatrixXd>* activations = nullptr) const;

    // Accumulates dL/d(params) into `dense_grad` given dL/d(logits) (N x 2)
    // and the activations recorded by forward_batch.
    void backward(const std::vector<Eigen::MatrixXd>& activations, const Eigen::MatrixXd& d_logits,
                  const ParameterStore& params, std::span<double> dense_grad) const;

    static std::string weight_name(std::size_t layer, int row, int col);
    static std::string bias_name(std::size_t layer, int row);

private:
    struct LayerView {
        Eigen::Map<const RowMajorMatrix<double>> weight;
        Eigen::Map<const Eigen::VectorXd> bias;
        std::size_t weight_offset;
        std::size_t bias_offset;
    };

    LayerView layer(std::size_t l, const ParameterStore& params) const;

    std::vector<int> dims_;
};

struct Probabilities {
    double cn = 0.5;
    double ad = 0.5;
};

// Max-subtracted softmax; exact to rounding for |logits| <= 700.
Probabilities softmax(LogitPair y);

struct ClassWeights {
    double cn = 1.0;
    double ad = 1.0;

    double of(Label l) const { return l == Label::ad ? ad : cn; }
};

// Inverse class frequency normalised to mean 1. Falls back to unit weights
// when either class is absent.
ClassWeights inverse_frequency_weights(std::span<const Label> labels);

inline constexpr double kLogFloor = 1e-12;

// Mean of -w_class * log(max(p_true, kLogFloor)). Throws on an empty batch.
double cross_entropy(std::span<const std::pair<Probabilities, Label>> batch, ClassWeights weights);

// Per-sample loss term and its gradient with respect to the logits.
struct SampleLoss {
    double loss = 0.0;
    LogitGradient d_logits;
};

SampleLoss softmax_cross_entropy(LogitPair y, Label label, ClassWeights weights);

// Logits CSV: header `id,logit_cn,logit_ad`.
std::map<std::string, LogitPair> load_external_logits(const std::filesystem::path& path);
std::map<std::string, LogitPair> parse_external_logits(std::string_view text);

}  // namespace nsad
