#include "hsd/nn.hpp"

#include <cmath>

#include "hsd/error.hpp"

namespace hsd::nn {
namespace {

Matrix sigmoid_of(const Matrix& a) {
    return a.unaryExpr([](double x) { return sigmoid(x); });
}

Matrix tanh_of(const Matrix& a) { return a.array().tanh().matrix(); }

// Columns of `active` where mask is set, columns of `carry` elsewhere.
Matrix blend(const Mask& mask, const Matrix& active, const Matrix& carry) {
    Matrix out = carry;
    for (Eigen::Index b = 0; b < mask.size(); ++b)
        if (mask(b)) out.col(b) = active.col(b);
    return out;
}

void zero_inactive(const Mask& mask, Matrix& m) {
    for (Eigen::Index b = 0; b < mask.size(); ++b)
        if (!mask(b)) m.col(b).setZero();
}

} // namespace

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void init_uniform(Matrix& m, double bound, Rng& rng) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
}

void init_normal(Matrix& m, double stddev, Rng& rng) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.normal(0.0, stddev);
}

// --- Linear ----------------------------------------------------------------

Linear::Linear(std::string name, int in, int out)
    : weight(name + ".weight", out, in), bias(name + ".bias", out, 1) {}

void Linear::init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, in())));
    init_uniform(weight.value, bound, rng);
    init_uniform(bias.value, bound, rng);
}

Matrix Linear::forward(const Matrix& x) const {
    Matrix y = weight.value * x;
    y.colwise() += bias.value.col(0);
    return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
    weight.grad.noalias() += dy * x.transpose();
    bias.grad.col(0) += dy.rowwise().sum();
    return weight.value.transpose() * dy;
}

// --- Embedding -------------------------------------------------------------

Embedding::Embedding(std::string name, int vocab_size, int dim)
    : weight(name + ".weight", vocab_size, dim) {}

void Embedding::init(Rng& rng, std::int32_t pad_id) {
    init_normal(weight.value, 1.0, rng);
    if (pad_id >= 0 && pad_id < vocab_size()) weight.value.row(pad_id).setZero();
}

// --- LSTM ------------------------------------------------------------------

LstmLayer::LstmLayer(std::string name, int input, int hidden)
    : w_input(name + ".w_input", 4 * hidden, input),
      w_hidden(name + ".w_hidden", 4 * hidden, hidden),
      bias(name + ".bias", 4 * hidden, 1) {}

void LstmLayer::init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size()));
    init_uniform(w_input.value, bound, rng);
    init_uniform(w_hidden.value, bound, rng);
    init_uniform(bias.value, bound, rng);
}

std::unique_ptr<RecurrentLayer> LstmLayer::clone() const {
    auto copy = std::make_unique<LstmLayer>(*this);
    copy->cache_.clear();
    return copy;
}

Matrix LstmLayer::run(const SequenceBatch& in, std::vector<Matrix>* outputs,
                      std::vector<Step>* cache) const {
    const Eigen::Index hidden = hidden_size();
    Matrix h = Matrix::Zero(hidden, in.batch);
    Matrix c = Matrix::Zero(hidden, in.batch);
    if (outputs != nullptr) outputs->clear();
    if (cache != nullptr) {
        cache->clear();
        cache->reserve(in.xs.size());
    }
    for (std::size_t t = 0; t < in.xs.size(); ++t) {
        Matrix a = w_input.value * in.xs[t] + w_hidden.value * h;
        a.colwise() += bias.value.col(0);
        Matrix i = sigmoid_of(a.topRows(hidden));
        Matrix f = sigmoid_of(a.middleRows(hidden, hidden));
        Matrix g = tanh_of(a.middleRows(2 * hidden, hidden));
        Matrix o = sigmoid_of(a.bottomRows(hidden));
        Matrix c_new = f.cwiseProduct(c) + i.cwiseProduct(g);
        Matrix tanh_c = tanh_of(c_new);
        Matrix h_new = o.cwiseProduct(tanh_c);
        const Mask& mask = in.masks[t];
        if (cache != nullptr)
            cache->push_back({in.xs[t], h, c, std::move(i), std::move(f), std::move(g), std::move(o),
                              tanh_c, mask});
        c = blend(mask, c_new, c);
        h = blend(mask, h_new, h);
        if (outputs != nullptr) outputs->push_back(h);
    }
    return h;
}

Matrix LstmLayer::forward(const SequenceBatch& in, std::vector<Matrix>* outputs) const {
    return run(in, outputs, nullptr);
}

Matrix LstmLayer::forward_cached(const SequenceBatch& in, std::vector<Matrix>* outputs) {
    return run(in, outputs, &cache_);
}

std::vector<Matrix> LstmLayer::backward(const Matrix& dh_final, const std::vector<Matrix>& dh_steps) {
    const Eigen::Index hidden = hidden_size();
    Matrix dh = dh_final;
    Matrix dc = Matrix::Zero(dh.rows(), dh.cols());
    std::vector<Matrix> dxs(cache_.size());
    for (std::size_t t = cache_.size(); t-- > 0;) {
        const Step& s = cache_[t];
        if (!dh_steps.empty()) dh += dh_steps[t];
        const auto ones = Matrix::Ones(hidden, dh.cols());
        Matrix d_o = dh.cwiseProduct(s.tanh_c).cwiseProduct(s.o.cwiseProduct(ones - s.o));
        Matrix dc_total = dc + dh.cwiseProduct(s.o).cwiseProduct(ones - s.tanh_c.cwiseProduct(s.tanh_c));
        Matrix d_i = dc_total.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct(ones - s.i));
        Matrix d_g = dc_total.cwiseProduct(s.i).cwiseProduct(ones - s.g.cwiseProduct(s.g));
        Matrix d_f = dc_total.cwiseProduct(s.c_prev).cwiseProduct(s.f.cwiseProduct(ones - s.f));

        Matrix da(4 * hidden, dh.cols());
        da << d_i, d_f, d_g, d_o;
        zero_inactive(s.mask, da);

        w_input.grad.noalias() += da * s.x.transpose();
        w_hidden.grad.noalias() += da * s.h_prev.transpose();
        bias.grad.col(0) += da.rowwise().sum();
        dxs[t] = w_input.value.transpose() * da;

        Matrix dh_prev = w_hidden.value.transpose() * da;
        Matrix dc_prev = dc_total.cwiseProduct(s.f);
        dh = blend(s.mask, dh_prev, dh);
        dc = blend(s.mask, dc_prev, dc);
    }
    cache_.clear();
    return dxs;
}

// --- GRU -------------------------------------------------------------------

GruLayer::GruLayer(std::string name, int input, int hidden)
    : w_input(name + ".w_input", 3 * hidden, input),
      w_hidden(name + ".w_hidden", 3 * hidden, hidden),
      bias(name + ".bias", 3 * hidden, 1) {}

void GruLayer::init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size()));
    init_uniform(w_input.value, bound, rng);
    init_uniform(w_hidden.value, bound, rng);
    init_uniform(bias.value, bound, rng);
}

std::unique_ptr<RecurrentLayer> GruLayer::clone() const {
    auto copy = std::make_unique<GruLayer>(*this);
    copy->cache_.clear();
    return copy;
}

Matrix GruLayer::run(const SequenceBatch& in, std::vector<Matrix>* outputs,
                     std::vector<Step>* cache) const {
    const Eigen::Index hidden = hidden_size();
    Matrix h = Matrix::Zero(hidden, in.batch);
    if (outputs != nullptr) outputs->clear();
    if (cache != nullptr) {
        cache->clear();
        cache->reserve(in.xs.size());
    }
    for (std::size_t t = 0; t < in.xs.size(); ++t) {
        Matrix ax = w_input.value * in.xs[t];
        ax.colwise() += bias.value.col(0);
        Matrix ah = w_hidden.value * h;
        Matrix r = sigmoid_of(ax.topRows(hidden) + ah.topRows(hidden));
        Matrix z = sigmoid_of(ax.middleRows(hidden, hidden) + ah.middleRows(hidden, hidden));
        Matrix hn = ah.bottomRows(hidden);
        Matrix n = tanh_of(ax.bottomRows(hidden) + r.cwiseProduct(hn));
        Matrix h_new = n + z.cwiseProduct(h - n);
        const Mask& mask = in.masks[t];
        if (cache != nullptr)
            cache->push_back({in.xs[t], h, std::move(r), std::move(z), std::move(n), std::move(hn), mask});
        h = blend(mask, h_new, h);
        if (outputs != nullptr) outputs->push_back(h);
    }
    return h;
}

Matrix GruLayer::forward(const SequenceBatch& in, std::vector<Matrix>* outputs) const {
    return run(in, outputs, nullptr);
}

Matrix GruLayer::forward_cached(const SequenceBatch& in, std::vector<Matrix>* outputs) {
    return run(in, outputs, &cache_);
}

std::vector<Matrix> GruLayer::backward(const Matrix& dh_final, const std::vector<Matrix>& dh_steps) {
    const Eigen::Index hidden = hidden_size();
    Matrix dh = dh_final;
    std::vector<Matrix> dxs(cache_.size());
    for (std::size_t t = cache_.size(); t-- > 0;) {
        const Step& s = cache_[t];
        if (!dh_steps.empty()) dh += dh_steps[t];
        const auto ones = Matrix::Ones(hidden, dh.cols());
        Matrix dn = dh.cwiseProduct(ones - s.z);
        Matrix dz = dh.cwiseProduct(s.h_prev - s.n);
        Matrix dh_direct = dh.cwiseProduct(s.z);
        Matrix dan = dn.cwiseProduct(ones - s.n.cwiseProduct(s.n));
        Matrix dar = dan.cwiseProduct(s.hn).cwiseProduct(s.r.cwiseProduct(ones - s.r));
        Matrix daz = dz.cwiseProduct(s.z.cwiseProduct(ones - s.z));

        Matrix dax(3 * hidden, dh.cols());
        dax << dar, daz, dan;
        Matrix dah(3 * hidden, dh.cols());
        dah << dar, daz, dan.cwiseProduct(s.r);
        zero_inactive(s.mask, dax);
        zero_inactive(s.mask, dah);

        w_input.grad.noalias() += dax * s.x.transpose();
        w_hidden.grad.noalias() += dah * s.h_prev.transpose();
        bias.grad.col(0) += dax.rowwise().sum();
        dxs[t] = w_input.value.transpose() * dax;

        Matrix dh_prev = dh_direct + w_hidden.value.transpose() * dah;
        dh = blend(s.mask, dh_prev, dh);
    }
    cache_.clear();
    return dxs;
}

// --- Dropout and losses ----------------------------------------------------

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    Matrix mask = Matrix::Ones(rows, cols);
    if (p <= 0.0) return mask;
    if (p >= 1.0) return Matrix::Zero(rows, cols);
    const double scale = 1.0 / (1.0 - p);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = rng.uniform() < p ? 0.0 : scale;
    return mask;
}

LossResult bce_with_logits(const Matrix& logits, std::span<const int> labels) {
    if (logits.cols() != 1) throw ConfigError("bce_with_logits: expected one logit per row");
    if (static_cast<std::size_t>(logits.rows()) != labels.size())
        throw ConfigError("bce_with_logits: batch/label size mismatch");
    LossResult out;
    out.grad = Matrix::Zero(logits.rows(), 1);
    const double n = static_cast<double>(labels.size());
    for (Eigen::Index b = 0; b < logits.rows(); ++b) {
        const double x = logits(b, 0);
        const double y = labels[static_cast<std::size_t>(b)];
        // max(x,0) - x*y + log(1 + exp(-|x|))
        out.loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
        out.grad(b, 0) = (sigmoid(x) - y) / n;
    }
    out.loss /= n;
    return out;
}

LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size())
        throw ConfigError("softmax_cross_entropy: batch/label size mismatch");
    LossResult out;
    out.grad = Matrix::Zero(logits.rows(), logits.cols());
    const double n = static_cast<double>(labels.size());
    for (Eigen::Index b = 0; b < logits.rows(); ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= logits.cols()) throw ConfigError("softmax_cross_entropy: label out of range");
        const double mx = logits.row(b).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(b).array() - mx).exp().matrix();
        const double z = e.sum();
        out.loss += -(logits(b, y) - mx - std::log(z));
        out.grad.row(b) = e / z / n;
        out.grad(b, y) -= 1.0 / n;
    }
    out.loss /= n;
    return out;
}

LossResult classification_loss(const Matrix& logits, std::span<const int> labels) {
    return logits.cols() == 1 ? bce_with_logits(logits, labels)
                              : softmax_cross_entropy(logits, labels);
}

// --- Optimisation ----------------------------------------------------------

double grad_norm(std::span<Parameter* const> params) {
    double sq = 0.0;
    for (const auto* p : params) sq += p->grad.squaredNorm();
    return std::sqrt(sq);
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
    const double norm = grad_norm(params);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / (norm + 1e-12);
        for (auto* p : params) p->grad *= scale;
    }
    return norm;
}

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto* p : params_) {
        m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = *params_[k];
        m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * p.grad;
        v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
        p.value.array() -= lr_ * (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + eps_);
    }
}

void Adam::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

} // namespace hsd::nn
