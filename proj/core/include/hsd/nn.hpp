#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hsd/random.hpp"

namespace hsd::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

    Eigen::Index size() const { return value.size(); }
    void zero_grad() { grad.setZero(); }
};

void init_uniform(Matrix& m, double bound, Rng& rng);
void init_normal(Matrix& m, double stddev, Rng& rng);

/// Column-wise batch mask: active(b) == (t < length_b).
using Mask = Eigen::Array<bool, 1, Eigen::Dynamic>;

// ---------------------------------------------------------------------------

/// y = W x + b over column batches (in x B -> out x B).
class Linear {
public:
    Linear() = default;
    Linear(std::string name, int in, int out);

    void init(Rng& rng);
    Matrix forward(const Matrix& x) const;
    /// Accumulates parameter grads; returns dL/dx.
    Matrix backward(const Matrix& x, const Matrix& dy);

    int in() const { return static_cast<int>(weight.value.cols()); }
    int out() const { return static_cast<int>(weight.value.rows()); }
    std::vector<Parameter*> parameters() { return {&weight, &bias}; }

    Parameter weight; // out x in
    Parameter bias;   // out x 1
};

/// Lookup table; rows are token vectors.
class Embedding {
public:
    Embedding() = default;
    Embedding(std::string name, int vocab_size, int dim);

    /// N(0, 1) rows with a zero padding row.
    void init(Rng& rng, std::int32_t pad_id);
    int vocab_size() const { return static_cast<int>(weight.value.rows()); }
    int dim() const { return static_cast<int>(weight.value.cols()); }
    std::vector<Parameter*> parameters() { return {&weight}; }

    Parameter weight; // vocab x dim
};

// ---------------------------------------------------------------------------

/// Per-step inputs of a masked recurrent pass: xs[t] is (input x B).
struct SequenceBatch {
    std::vector<Matrix> xs;
    std::vector<Mask> masks;
    Eigen::Index batch = 0;
};

/// Common interface of the single-layer recurrent cells.
class RecurrentLayer {
public:
    virtual ~RecurrentLayer() = default;

    virtual int input_size() const = 0;
    virtual int hidden_size() const = 0;
    virtual void init(Rng& rng) = 0;
    virtual std::vector<Parameter*> parameters() = 0;
    virtual std::unique_ptr<RecurrentLayer> clone() const = 0;

    /// Runs all steps. Inactive columns carry their state forward, so the
    /// returned final state is the state at each sequence's true length.
    /// `outputs`, when non-null, receives h_t for every step.
    virtual Matrix forward(const SequenceBatch& in, std::vector<Matrix>* outputs) const = 0;

    /// Training forward that records what backward() needs.
    virtual Matrix forward_cached(const SequenceBatch& in, std::vector<Matrix>* outputs) = 0;

    /// dh_final: gradient w.r.t. the final state; dh_steps (optional, may be
    /// empty) adds per-step output gradients. Returns dL/dx_t for each step.
    virtual std::vector<Matrix> backward(const Matrix& dh_final,
                                         const std::vector<Matrix>& dh_steps) = 0;
};

/// LSTM with one bias vector; gate blocks ordered input, forget, cell, output.
class LstmLayer final : public RecurrentLayer {
public:
    LstmLayer(std::string name, int input, int hidden);

    int input_size() const override { return static_cast<int>(w_input.value.cols()); }
    int hidden_size() const override { return static_cast<int>(w_hidden.value.cols()); }
    void init(Rng& rng) override;
    std::vector<Parameter*> parameters() override { return {&w_input, &w_hidden, &bias}; }
    std::unique_ptr<RecurrentLayer> clone() const override;

    Matrix forward(const SequenceBatch& in, std::vector<Matrix>* outputs) const override;
    Matrix forward_cached(const SequenceBatch& in, std::vector<Matrix>* outputs) override;
    std::vector<Matrix> backward(const Matrix& dh_final, const std::vector<Matrix>& dh_steps) override;

    Parameter w_input;  // 4H x In
    Parameter w_hidden; // 4H x H
    Parameter bias;     // 4H x 1

private:
    struct Step {
        Matrix x, h_prev, c_prev, i, f, g, o, tanh_c;
        Mask mask;
    };
    Matrix run(const SequenceBatch& in, std::vector<Matrix>* outputs, std::vector<Step>* cache) const;
    std::vector<Step> cache_;
};

/// GRU with one bias vector; gate blocks ordered reset, update, candidate:
///   r = s(Wr x + Ur h + br), z = s(Wz x + Uz h + bz),
///   n = tanh(Wn x + r * (Un h) + bn), h' = (1 - z) * n + z * h.
class GruLayer final : public RecurrentLayer {
public:
    GruLayer(std::string name, int input, int hidden);

    int input_size() const override { return static_cast<int>(w_input.value.cols()); }
    int hidden_size() const override { return static_cast<int>(w_hidden.value.cols()); }
    void init(Rng& rng) override;
    std::vector<Parameter*> parameters() override { return {&w_input, &w_hidden, &bias}; }
    std::unique_ptr<RecurrentLayer> clone() const override;

    Matrix forward(const SequenceBatch& in, std::vector<Matrix>* outputs) const override;
    Matrix forward_cached(const SequenceBatch& in, std::vector<Matrix>* outputs) override;
    std::vector<Matrix> backward(const Matrix& dh_final, const std::vector<Matrix>& dh_steps) override;

    Parameter w_input;  // 3H x In
    Parameter w_hidden; // 3H x H
    Parameter bias;     // 3H x 1

private:
    struct Step {
        Matrix x, h_prev, r, z, n, hn; // hn = Un h_prev
        Mask mask;
    };
    Matrix run(const SequenceBatch& in, std::vector<Matrix>* outputs, std::vector<Step>* cache) const;
    std::vector<Step> cache_;
};

// ---------------------------------------------------------------------------

/// Inverted dropout mask (values 0 or 1/(1-p)); all ones when p == 0.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng);

struct LossResult {
    double loss = 0.0;
    Matrix grad; // dL/dlogits, same shape as logits (B x C)
};

/// Mean binary cross-entropy on single-logit rows; labels in {0, 1}.
LossResult bce_with_logits(const Matrix& logits, std::span<const int> labels);
/// Mean categorical cross-entropy over softmax(logits); labels in [0, C).
LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);
/// Dispatches on the logit width: BCE for one column, softmax CE otherwise.
LossResult classification_loss(const Matrix& logits, std::span<const int> labels);

double sigmoid(double x);

// ---------------------------------------------------------------------------

/// Global L2 norm of all gradients.
double grad_norm(std::span<Parameter* const> params);
/// Rescales gradients so the global norm is at most max_norm; returns the pre-clip norm.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

class Adam {
public:
    Adam(std::vector<Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    void step();
    void zero_grad();
    double lr() const { return lr_; }
    long steps() const { return t_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Matrix> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

} // namespace hsd::nn
