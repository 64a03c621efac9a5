#pragma once
// Dense double-precision tensors with reverse-mode autodiff. Graphs are
// built op by op; backward() walks them once in reverse topological order.
// 4-D data uses (batch, channel, height, width) layout, row-major.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace nlss {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

struct Tensor : std::enable_shared_from_this<Tensor> {
    std::vector<int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;   // sized lazily, only when requires_grad
    bool requires_grad = false;

    std::function<void()> backward_fn;  // empty for leaves
    std::vector<TensorPtr> prev;

    static TensorPtr make(std::vector<int64_t> shape, bool requires_grad = false);
    static TensorPtr scalar(double v, bool requires_grad = false);

    int64_t numel() const;
    // grad buffer, allocated and zeroed on first touch
    double* g();
    void zero_grad();
};

// Seeds d(loss)/d(loss)=1 and propagates. Loss must be a scalar.
void backward(const TensorPtr& loss);

// ---- op set -------------------------------------------------------------

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr div(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul_k(const TensorPtr& a, double k);
TensorPtr add_k(const TensorPtr& a, double k);
TensorPtr relu(const TensorPtr& x);
// log(max(x, floor)); gradient is zero where the floor clamps
TensorPtr log_clamped(const TensorPtr& x, double floor = 1e-12);
TensorPtr exp_op(const TensorPtr& x);
TensorPtr softmax_channels(const TensorPtr& logits);           // over axis 1 of BCHW
TensorPtr sum_all(const TensorPtr& x);
TensorPtr mean_all(const TensorPtr& x);
TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b);
TensorPtr slice_channels(const TensorPtr& x, int64_t c0, int64_t c1);
TensorPtr upsample_nearest2x(const TensorPtr& x);
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias,
                 int stride, int pad);

// Running statistics live outside the graph (one buffer per bn layer).
struct BnStats {
    std::vector<double> mean;
    std::vector<double> var;
};
TensorPtr batch_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     BnStats& running, bool training,
                     double momentum = 0.1, double eps = 1e-5);

// Same values, no gradient path.
TensorPtr detach(const TensorPtr& x);

// While a guard is alive, ops record no backward functions (cheap eval).
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};

} // namespace nlss
