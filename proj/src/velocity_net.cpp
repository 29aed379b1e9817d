#include "pflow/velocity_net.hpp"

#include <cmath>
#include <sstream>

#include "pflow/binary_io.hpp"

namespace pflow {

std::size_t VelocityFieldParams::num_params() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.rows() * w.cols();
    for (const auto& b : biases) n += b.size();
    return n;
}

namespace {

std::vector<std::size_t> dims_for(const ArchitectureConfig& arch) {
    require(arch.data_dim >= 1, "architecture: data_dim must be >= 1");
    const std::size_t tf = arch.time_frequencies == 0 ? 0 : 2 * arch.time_frequencies + 1;
    std::vector<std::size_t> dims{arch.data_dim + tf};
    for (std::size_t h : arch.hidden) {
        require(h >= 1, "architecture: hidden widths must be >= 1");
        dims.push_back(h);
    }
    dims.push_back(arch.data_dim);
    return dims;
}

VelocityFieldParams shaped(const ArchitectureConfig& arch) {
    VelocityFieldParams p;
    p.layer_dims = dims_for(arch);
    p.time_features = arch.time_frequencies == 0 ? 0 : 2 * arch.time_frequencies + 1;
    p.activation = arch.activation;
    for (std::size_t l = 0; l + 1 < p.layer_dims.size(); ++l) {
        p.weights.emplace_back(p.layer_dims[l + 1], p.layer_dims[l]);
        p.biases.emplace_back(p.layer_dims[l + 1]);
    }
    return p;
}

inline double activate(Activation a, double z) {
    return a == Activation::Tanh ? std::tanh(z) : z;
}

// Derivative expressed through the activation value.
inline double activate_grad(Activation a, double y) {
    return a == Activation::Tanh ? 1.0 - y * y : 1.0;
}

void check_tape(const VelocityFieldParams& params, const ForwardTape& tape) {
    require(tape.pre.size() == params.num_layers() && tape.post.size() == params.num_layers(),
            "field_vjp: tape layer count does not match params");
    require(tape.input.size() == params.layer_dims.front(), "field_vjp: tape input dimension mismatch");
    for (std::size_t l = 0; l < params.num_layers(); ++l)
        require(tape.post[l].size() == params.layer_dims[l + 1], "field_vjp: tape layer width mismatch");
}

}  // namespace

VelocityFieldParams init_params(const ArchitectureConfig& arch, Rng& rng) {
    VelocityFieldParams p = shaped(arch);
    for (auto& w : p.weights) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        for (double& x : w.span()) x = rng.uniform(-limit, limit);
    }
    return p;
}

VelocityFieldParams zero_params(const ArchitectureConfig& arch) {
    return shaped(arch);
}

VelocityFieldParams linear_field(const Matrix& a) {
    require(a.rows() == a.cols(), "linear_field: A must be square");
    VelocityFieldParams p;
    p.layer_dims = {a.cols(), a.rows()};
    p.time_features = 0;
    p.activation = Activation::Identity;
    p.weights.push_back(a);
    p.biases.emplace_back(a.rows());
    return p;
}

void validate(const VelocityFieldParams& p) {
    require(p.layer_dims.size() >= 2, "params: need at least one layer");
    require(p.weights.size() + 1 == p.layer_dims.size() && p.biases.size() == p.weights.size(),
            "params: layer count mismatch");
    require(p.time_features == 0 || p.time_features % 2 == 1, "params: time_features must be 0 or odd");
    require(p.layer_dims.front() == p.data_dim() + p.time_features,
            "params: input width must equal data dim + time features");
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        require(p.weights[l].rows() == p.layer_dims[l + 1] && p.weights[l].cols() == p.layer_dims[l],
                "params: weight shape does not chain with layer_dims");
        require(p.biases[l].size() == p.layer_dims[l + 1], "params: bias length mismatch");
        if (!all_finite(p.weights[l].span()) || !all_finite(p.biases[l].span()))
            throw NumericalFailure("params: non-finite parameter in layer " + std::to_string(l));
    }
}

Vector time_embedding(double t, std::size_t time_features) {
    Vector tau(time_features);
    if (time_features == 0) return tau;
    tau[0] = t;
    for (std::size_t k = 1; 2 * k < time_features + 1; ++k) {
        const double w = 2.0 * M_PI * static_cast<double>(k) * t;
        tau[2 * k - 1] = std::sin(w);
        tau[2 * k] = std::cos(w);
    }
    return tau;
}

FieldEval field_forward(const VelocityFieldParams& params, const Vector& x, double t) {
    const std::size_t d = params.data_dim();
    require(x.size() == d, "field_forward: x has dimension " + std::to_string(x.size()) + ", field expects " +
                               std::to_string(d));
    require(t >= 0.0 && t <= 1.0, "field_forward: t must lie in [0, 1]");

    FieldEval out;
    ForwardTape& tape = out.tape;
    tape.input = Vector(params.layer_dims.front());
    for (std::size_t i = 0; i < d; ++i) tape.input[i] = x[i];
    const Vector tau = time_embedding(t, params.time_features);
    for (std::size_t i = 0; i < tau.size(); ++i) tape.input[d + i] = tau[i];

    const std::size_t L = params.num_layers();
    tape.pre.reserve(L);
    tape.post.reserve(L);
    const Vector* in = &tape.input;
    for (std::size_t l = 0; l < L; ++l) {
        const Matrix& w = params.weights[l];
        const Vector& b = params.biases[l];
        Vector z(w.rows());
        for (std::size_t o = 0; o < w.rows(); ++o)
            z[o] = dot(std::span<const double>(w.row(o), w.cols()), in->span()) + b[o];
        Vector a = z;
        if (l + 1 < L)
            for (double& v : a) v = activate(params.activation, v);
        if (!all_finite(a.span()))
            throw NumericalFailure("field_forward: non-finite activation in layer " + std::to_string(l));
        tape.pre.push_back(std::move(z));
        tape.post.push_back(std::move(a));
        in = &tape.post.back();
    }
    out.v = tape.post.back();
    return out;
}

Vector replay_tape(const VelocityFieldParams& params, const ForwardTape& tape) {
    check_tape(params, tape);
    Vector cur = tape.input;
    const std::size_t L = params.num_layers();
    for (std::size_t l = 0; l < L; ++l) {
        const Matrix& w = params.weights[l];
        Vector z(w.rows());
        for (std::size_t o = 0; o < w.rows(); ++o)
            z[o] = dot(std::span<const double>(w.row(o), w.cols()), cur.span()) + params.biases[l][o];
        if (l + 1 < L)
            for (double& v : z) v = activate(params.activation, v);
        cur = std::move(z);
    }
    return cur;
}

namespace {

// Shared backward pass. When grad_accum is non-empty the parameter gradient
// is added into it using the flatten_params layout.
Vector backward(const VelocityFieldParams& params, const ForwardTape& tape, const Vector& cotangent,
                std::span<double> grad_accum) {
    check_tape(params, tape);
    require(cotangent.size() == params.data_dim(), "field_vjp: cotangent dimension mismatch");
    const std::size_t L = params.num_layers();
    const bool want_params = !grad_accum.empty();
    if (want_params) require(grad_accum.size() == params.num_params(), "field_vjp: gradient buffer size mismatch");

    // Offsets of each layer's weights and biases in the flat layout.
    std::vector<std::size_t> w_off(L), b_off(L);
    std::size_t off = 0;
    for (std::size_t l = 0; l < L; ++l) {
        w_off[l] = off;
        off += params.weights[l].rows() * params.weights[l].cols();
    }
    for (std::size_t l = 0; l < L; ++l) {
        b_off[l] = off;
        off += params.biases[l].size();
    }

    Vector delta = cotangent;
    Vector delta_in;
    for (std::size_t li = L; li-- > 0;) {
        const Matrix& w = params.weights[li];
        const Vector& in = li == 0 ? tape.input : tape.post[li - 1];
        if (want_params) {
            double* gw = grad_accum.data() + w_off[li];
            double* gb = grad_accum.data() + b_off[li];
            const std::size_t cols = w.cols();
            for (std::size_t o = 0; o < w.rows(); ++o) {
                const double dlt = delta[o];
                gb[o] += dlt;
                if (dlt == 0.0) continue;
                double* row = gw + o * cols;
                for (std::size_t i = 0; i < cols; ++i) row[i] += dlt * in[i];
            }
        }
        delta_in = Vector(w.cols());
        for (std::size_t o = 0; o < w.rows(); ++o) {
            const double dlt = delta[o];
            if (dlt == 0.0) continue;
            const double* row = w.row(o);
            for (std::size_t i = 0; i < w.cols(); ++i) delta_in[i] += dlt * row[i];
        }
        if (li > 0) {
            const Vector& act = tape.post[li - 1];
            for (std::size_t i = 0; i < delta_in.size(); ++i)
                delta_in[i] *= activate_grad(params.activation, act[i]);
            delta = std::move(delta_in);
        }
    }
    Vector grad_x(params.data_dim());
    for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x[i] = delta_in[i];
    return grad_x;
}

}  // namespace

FieldVjp field_vjp(const VelocityFieldParams& params, const ForwardTape& tape, const Vector& cotangent,
                   bool with_param_grads) {
    FieldVjp out;
    if (with_param_grads) {
        out.grad_params.assign(params.num_params(), 0.0);
        out.grad_x = backward(params, tape, cotangent, out.grad_params);
    } else {
        out.grad_x = backward(params, tape, cotangent, {});
    }
    return out;
}

Vector field_vjp_accumulate(const VelocityFieldParams& params, const ForwardTape& tape, const Vector& cotangent,
                            std::span<double> grad_accum) {
    require(!grad_accum.empty(), "field_vjp_accumulate: empty gradient buffer");
    return backward(params, tape, cotangent, grad_accum);
}

double field_batch_sq_error(const VelocityFieldParams& params, const Matrix& inputs, const Matrix& targets,
                            double scale, std::span<double> grad_accum) {
    const std::size_t m = inputs.rows();
    const std::size_t L = params.num_layers();
    require(inputs.cols() == params.layer_dims.front(), "field_batch_sq_error: input width mismatch");
    require(targets.rows() == m && targets.cols() == params.data_dim(), "field_batch_sq_error: target shape mismatch");
    require(grad_accum.size() == params.num_params(), "field_batch_sq_error: gradient buffer size mismatch");

    // acts[0] = inputs, acts[l + 1] = output of layer l (batch x width).
    std::vector<Matrix> acts;
    acts.reserve(L + 1);
    acts.push_back(inputs);
    for (std::size_t l = 0; l < L; ++l) {
        const Matrix& w = params.weights[l];
        const Vector& b = params.biases[l];
        const Matrix& in = acts.back();
        Matrix out(m, w.rows());
        for (std::size_t o = 0; o < w.rows(); ++o) {
            const std::span<const double> wrow(w.row(o), w.cols());
            for (std::size_t i = 0; i < m; ++i)
                out(i, o) = dot(wrow, std::span<const double>(in.row(i), in.cols())) + b[o];
        }
        if (l + 1 < L)
            for (double& v : out.span()) v = activate(params.activation, v);
        if (!all_finite(out.span()))
            throw NumericalFailure("field_batch_sq_error: non-finite activation in layer " + std::to_string(l));
        acts.push_back(std::move(out));
    }

    Matrix delta = acts.back();
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < delta.cols(); ++k) {
            const double r = delta(i, k) - targets(i, k);
            loss += r * r;
            delta(i, k) = 2.0 * scale * r;
        }

    std::size_t w_off_end = 0;
    for (const auto& w : params.weights) w_off_end += w.rows() * w.cols();
    std::size_t w_off = w_off_end, b_off = grad_accum.size();
    for (std::size_t li = L; li-- > 0;) {
        const Matrix& w = params.weights[li];
        const Matrix& in = acts[li];
        w_off -= w.rows() * w.cols();
        b_off -= w.rows();
        Matrix delta_in(m, w.cols());
        for (std::size_t o = 0; o < w.rows(); ++o) {
            double* gw = grad_accum.data() + w_off + o * w.cols();
            const double* wrow = w.row(o);
            double gb = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double dlt = delta(i, o);
                if (dlt == 0.0) continue;
                gb += dlt;
                const double* xin = in.row(i);
                double* din = delta_in.row(i);
                for (std::size_t c = 0; c < w.cols(); ++c) {
                    gw[c] += dlt * xin[c];
                    din[c] += dlt * wrow[c];
                }
            }
            grad_accum[b_off + o] += gb;
        }
        if (li > 0) {
            const Matrix& act = acts[li];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t c = 0; c < act.cols(); ++c) delta_in(i, c) *= activate_grad(params.activation, act(i, c));
            delta = std::move(delta_in);
        }
    }
    return loss;
}

Matrix field_jacobian(const VelocityFieldParams& params, const Vector& x, double t) {
    const std::size_t d = params.data_dim();
    if (d > 64)
        throw CapabilityError("field_jacobian: dense Jacobians are limited to d <= 64 (d = " + std::to_string(d) +
                              "); use field_vjp for larger fields");
    const FieldEval ev = field_forward(params, x, t);
    Matrix jac(d, d);
    for (std::size_t k = 0; k < d; ++k) {
        Vector e(d);
        e[k] = 1.0;
        const Vector row = backward(params, ev.tape, e, {});
        for (std::size_t j = 0; j < d; ++j) jac(k, j) = row[j];
    }
    return jac;
}

double lipschitz_upper_bound(const VelocityFieldParams& params) {
    validate(params);
    const std::size_t d = params.data_dim();
    double bound = 1.0;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const Matrix& w = params.weights[l];
        if (l == 0) {
            Matrix wx(w.rows(), d);
            for (std::size_t r = 0; r < w.rows(); ++r)
                for (std::size_t c = 0; c < d; ++c) wx(r, c) = w(r, c);
            bound *= spectral_norm(wx);
        } else {
            bound *= spectral_norm(w);
        }
        if (bound == 0.0) return 0.0;
    }
    return bound;
}

std::vector<double> flatten_params(const VelocityFieldParams& params) {
    std::vector<double> flat;
    flat.reserve(params.num_params());
    for (const auto& w : params.weights) flat.insert(flat.end(), w.span().begin(), w.span().end());
    for (const auto& b : params.biases) flat.insert(flat.end(), b.begin(), b.end());
    return flat;
}

void unflatten_params(VelocityFieldParams& params, std::span<const double> flat) {
    require(flat.size() == params.num_params(), "unflatten_params: size mismatch");
    std::size_t off = 0;
    for (auto& w : params.weights)
        for (double& x : w.span()) x = flat[off++];
    for (auto& b : params.biases)
        for (double& x : b) x = flat[off++];
}

std::vector<std::uint8_t> serialize_checkpoint(const VelocityFieldParams& params) {
    validate(params);
    ByteWriter w;
    w.magic("PFLW");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(params.layer_dims.size()));
    for (std::size_t d : params.layer_dims) w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(params.time_features));
    w.u32(static_cast<std::uint32_t>(params.activation));
    for (const auto& m : params.weights)
        for (double x : m.span()) w.f64(x);
    for (const auto& b : params.biases)
        for (double x : b) w.f64(x);
    return w.bytes();
}

VelocityFieldParams deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    r.expect_magic("PFLW");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported format version " + std::to_string(version));
    VelocityFieldParams p;
    const std::uint32_t n_dims = r.u32();
    if (n_dims < 2 || n_dims > 64) throw IoError("checkpoint: implausible layer count");
    for (std::uint32_t i = 0; i < n_dims; ++i) p.layer_dims.push_back(r.u32());
    p.time_features = r.u32();
    const std::uint32_t act = r.u32();
    if (act > 1) throw IoError("checkpoint: unknown activation tag " + std::to_string(act));
    p.activation = static_cast<Activation>(act);
    for (std::size_t l = 0; l + 1 < p.layer_dims.size(); ++l) {
        Matrix m(p.layer_dims[l + 1], p.layer_dims[l]);
        for (double& x : m.span()) x = r.f64();
        p.weights.push_back(std::move(m));
    }
    for (std::size_t l = 0; l + 1 < p.layer_dims.size(); ++l) {
        Vector b(p.layer_dims[l + 1]);
        for (double& x : b) x = r.f64();
        p.biases.push_back(std::move(b));
    }
    if (!r.at_end()) throw IoError("checkpoint: trailing bytes");
    validate(p);
    return p;
}

void save_checkpoint(const std::string& path, const VelocityFieldParams& params) {
    write_file_bytes(path, serialize_checkpoint(params));
}

VelocityFieldParams load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(read_file_bytes(path));
}

}  // namespace pflow
