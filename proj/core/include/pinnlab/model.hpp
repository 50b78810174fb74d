#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pinnlab/graph.hpp"

namespace pinnlab {

enum class Activation { tanh, sine, swish };

/// Fixed random Fourier feature map applied after the coordinate embedding.
/// The frequency matrix is drawn once from Normal(mean, sigma^2) and is not
/// trainable.
struct RFFSpec {
    std::size_t width = 64;
    double sigma = 10.0;
    double mean = 0.0;
};

/// Weight factorization W = diag(exp(s)) * V. Both V and s are trainable.
struct RWFSpec {
    double mean = 1.0;
    double stddev = 0.1;
};

/// Per-input-axis hard periodicity. A periodic axis is mapped to
/// (cos(2*pi*x/P), sin(2*pi*x/P)); the network output is then periodic in
/// that axis by construction, including all its derivatives. The period may
/// be trainable (intended for the time axis, initialized to the domain
/// length).
struct AxisPeriodic {
    bool periodic = false;
    double period = 0.0;
    bool trainable = false;
};

struct ModelSpec {
    std::size_t in_dim = 2;
    std::size_t hidden_dim = 64;
    std::size_t depth = 3;  // number of hidden layers
    std::size_t out_dim = 1;
    Activation activation = Activation::tanh;
    double sine_w0 = 1.0;
    std::vector<AxisPeriodic> periodic_axes;  // empty, or one entry per input axis
    std::optional<RFFSpec> rff;
    std::optional<RWFSpec> rwf;

    /// Width after the coordinate embedding (before any RFF map).
    std::size_t embedded_width() const;
    /// Input width of the first linear layer (2*rff.width when RFF is on).
    std::size_t first_layer_width() const;
    void validate() const;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// A network with materializable parameters. Parameters are plain tensors
/// owned by the model; a forward pass binds them as graph leaves so that the
/// same model can be evaluated on many graphs (one per worker). Parameters
/// are immutable during a forward pass.
class Model {
public:
    Model(ModelSpec spec, std::uint64_t seed);

    const ModelSpec& spec() const { return spec_; }
    std::vector<NamedTensor>& trainable() { return params_; }
    const std::vector<NamedTensor>& trainable() const { return params_; }
    /// Frozen RFF frequency matrix (empty tensor when RFF is off).
    const Tensor& rff_matrix() const { return rff_B_; }
    Tensor& rff_matrix_mut() { return rff_B_; }
    /// Total number of trainable scalars.
    std::size_t trainable_count() const;

    struct Binding {
        std::vector<Value> params;  // aligned with trainable()
    };
    Binding bind(Graph& g) const;

    /// Layered evaluation: embedding -> optional RFF -> hidden layers ->
    /// linear output. `coords` holds one [N,1] leaf per input axis.
    Value forward(Graph& g, const Binding& bind, std::span<const Value> coords) const;

    /// Convenience: bind and evaluate on freshly created coordinate leaves.
    Value forward(Graph& g, std::span<const Value> coords) const;

private:
    ModelSpec spec_;
    std::vector<NamedTensor> params_;
    Tensor rff_B_;  // [embedded_width x rff.width]

    struct LayerSlot {
        int w = -1;  // index into params_: weight or V
        int b = -1;
        int s = -1;  // RWF log-scales, [1 x out]
    };
    std::vector<LayerSlot> layers_;
    std::vector<int> period_param_;  // per axis: params_ index of trainable period, or -1

    Value layer_weight(Graph& g, const Binding& bind, std::size_t layer) const;
};

/// Materialize a factored weight: W[i,j] = exp(s[i]) * V[i,j].
/// V is [out x in], s is a vector of length out.
Tensor rwf_materialize(const Tensor& V, const Tensor& s);

/// Random Fourier feature map: concat(cos(x*B), sin(x*B)).
/// x is [N x d], B is [d x width]; the result is [N x 2*width].
Tensor rff_map(const Tensor& x, const Tensor& B);

/// Two-coordinate periodic embedding
/// [cos(2*pi*x/Px), sin(2*pi*x/Px), cos(2*pi*t/Pt), sin(2*pi*t/Pt)].
Tensor periodic_embed(const Tensor& x, const Tensor& t, double Px, double Pt);

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& n);

}  // namespace pinnlab
