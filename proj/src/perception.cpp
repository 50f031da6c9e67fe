#include "nsad/perception.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nsad/random.hpp"
#include "text_io.hpp"

namespace nsad {

MlpModel::MlpModel(std::vector<int> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw std::invalid_argument("MLP needs at least an input and an output layer");
    if (dims_.back() != 2) throw std::invalid_argument("MLP output layer must have 2 units");
    for (int d : dims_)
        if (d <= 0) throw std::invalid_argument("MLP layer sizes must be positive");
}

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer_count(); ++l)
        n += static_cast<std::size_t>(dims_[l + 1]) * static_cast<std::size_t>(dims_[l] + 1);
    return n;
}

std::string MlpModel::weight_name(std::size_t layer, int row, int col) {
    return "mlp." + std::to_string(layer) + ".w." + std::to_string(row) + "." + std::to_string(col);
}

std::string MlpModel::bias_name(std::size_t layer, int row) {
    return "mlp." + std::to_string(layer) + ".b." + std::to_string(row);
}

void MlpModel::register_params(ParameterStore& store, std::uint64_t seed) const {
    Rng rng(combine_seed(seed, fnv1a("mlp-init")));
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const int in = dims_[l];
        const int out = dims_[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) store.add(weight_name(l, r, c), rng.uniform(-limit, limit));
        for (int r = 0; r < out; ++r) store.add(bias_name(l, r), 0.0);
    }
}

MlpModel::LayerView MlpModel::layer(std::size_t l, const ParameterStore& params) const {
    const int in = dims_[l];
    const int out = dims_[l + 1];
    const std::size_t w0 = params.index_of(weight_name(l, 0, 0));
    const std::size_t b0 = params.index_of(bias_name(l, 0));
    // Registration lays each block out contiguously; verify the far corners.
    if (params.index_of(weight_name(l, out - 1, in - 1)) != w0 + static_cast<std::size_t>(out * in) - 1 ||
        params.index_of(bias_name(l, out - 1)) != b0 + static_cast<std::size_t>(out) - 1)
        throw std::logic_error("MLP layer " + std::to_string(l) + " is not contiguous in the parameter store");
    return LayerView{Eigen::Map<const RowMajorMatrix<double>>(params.data() + w0, out, in),
                     Eigen::Map<const Eigen::VectorXd>(params.data() + b0, out), w0, b0};
}

Eigen::MatrixXd MlpModel::forward_batch(const Eigen::MatrixXd& inputs, const ParameterStore& params,
                                        std::vector<Eigen::MatrixXd>* activations) const {
    if (inputs.cols() != input_dim())
        throw std::invalid_argument("feature dimension " + std::to_string(inputs.cols()) + " != model input " +
                                    std::to_string(input_dim()));
    if (activations) activations->assign(1, inputs);
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const LayerView v = layer(l, params);
        Eigen::MatrixXd z = a * v.weight.transpose();
        z.rowwise() += v.bias.transpose();
        if (l + 1 < layer_count()) {
            a = z.cwiseMax(0.0);
            if (activations) activations->push_back(a);
        } else {
            a = std::move(z);
        }
    }
    return a;
}

LogitPair MlpModel::forward(const Eigen::VectorXd& features, const ParameterStore& params) const {
    const Eigen::MatrixXd out = forward_batch(features.transpose(), params);
    return {out(0, 0), out(0, 1)};
}

void MlpModel::backward(const std::vector<Eigen::MatrixXd>& activations, const Eigen::MatrixXd& d_logits,
                        const ParameterStore& params, std::span<double> dense_grad) const {
    if (activations.size() != layer_count()) throw std::invalid_argument("activation count mismatch");
    Eigen::MatrixXd g = d_logits;
    for (std::size_t l = layer_count(); l-- > 0;) {
        const LayerView v = layer(l, params);
        const Eigen::MatrixXd& a = activations[l];
        const RowMajorMatrix<double> dw = g.transpose() * a;
        const Eigen::VectorXd db = g.colwise().sum().transpose();
        Eigen::Map<RowMajorMatrix<double>>(dense_grad.data() + v.weight_offset, dw.rows(), dw.cols()) += dw;
        Eigen::Map<Eigen::VectorXd>(dense_grad.data() + v.bias_offset, db.size()) += db;
        if (l > 0) {
            Eigen::MatrixXd upstream = g * v.weight;
            g = upstream.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
        }
    }
}

Probabilities softmax(LogitPair y) {
    const double m = std::max(y.cn, y.ad);
    const double e_cn = std::exp(y.cn - m);
    const double e_ad = std::exp(y.ad - m);
    const double s = e_cn + e_ad;
    return {e_cn / s, e_ad / s};
}

ClassWeights inverse_frequency_weights(std::span<const Label> labels) {
    const auto n_ad = static_cast<double>(std::count(labels.begin(), labels.end(), Label::ad));
    const double n_cn = static_cast<double>(labels.size()) - n_ad;
    if (n_ad == 0.0 || n_cn == 0.0) return {};
    const double n = n_ad + n_cn;
    return {2.0 * n_ad / n, 2.0 * n_cn / n};
}

double cross_entropy(std::span<const std::pair<Probabilities, Label>> batch, ClassWeights weights) {
    if (batch.empty()) throw std::invalid_argument("cross_entropy of an empty batch");
    double total = 0.0;
    for (const auto& [p, label] : batch) {
        const double p_true = label == Label::ad ? p.ad : p.cn;
        total += -weights.of(label) * std::log(std::max(p_true, kLogFloor));
    }
    return total / static_cast<double>(batch.size());
}

SampleLoss softmax_cross_entropy(LogitPair y, Label label, ClassWeights weights) {
    const Probabilities p = softmax(y);
    const double w = weights.of(label);
    const double p_true = label == Label::ad ? p.ad : p.cn;
    SampleLoss out;
    out.loss = -w * std::log(std::max(p_true, kLogFloor));
    if (p_true > kLogFloor) {
        out.d_logits.cn = w * (p.cn - (label == Label::cn ? 1.0 : 0.0));
        out.d_logits.ad = w * (p.ad - (label == Label::ad ? 1.0 : 0.0));
    }
    return out;
}

std::map<std::string, LogitPair> parse_external_logits(std::string_view text) {
    const auto lines = detail::split_lines(text);
    if (lines.empty() || detail::trim(lines.front()) != "id,logit_cn,logit_ad")
        throw DataError("logits CSV must start with header 'id,logit_cn,logit_ad'");
    std::map<std::string, LogitPair> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (detail::trim(lines[i]).empty()) continue;
        const auto fields = detail::split_csv_line(lines[i]);
        const std::string where = "logits CSV line " + std::to_string(i + 1);
        if (fields.size() != 3) throw DataError(where + ": expected 3 fields");
        LogitPair y;
        if (fields[0].empty()) throw DataError(where + ": empty id");
        if (!detail::parse_double(detail::trim(fields[1]), y.cn) || !detail::parse_double(detail::trim(fields[2]), y.ad))
            throw DataError(where + ": malformed logit value");
        if (!out.emplace(fields[0], y).second) throw DataError("duplicate id in logits CSV: " + fields[0]);
    }
    return out;
}

std::map<std::string, LogitPair> load_external_logits(const std::filesystem::path& path) {
    return parse_external_logits(detail::read_file(path));
}

}  // namespace nsad
