// SPDX-License-Identifier: Apache-2.0
#include "asopt/precond.hpp"

#include <cmath>

#include "asopt/errors.hpp"
#include "asopt/tensor_bytes.hpp"

namespace asopt {

std::string to_string(Method m) {
    switch (m) {
        case Method::AdamW: return "AdamW";
        case Method::Shampoo: return "Shampoo";
        default: return "SOAP";
    }
}

Method method_from_string(const std::string& s) {
    if (s == "AdamW") return Method::AdamW;
    if (s == "Shampoo") return Method::Shampoo;
    if (s == "SOAP") return Method::Soap;
    throw ConfigInvalidError("unknown optimizer method: " + s);
}

std::string to_string(Accumulation a) { return a == Accumulation::Sum ? "Sum" : "EMA"; }

Accumulation accumulation_from_string(const std::string& s) {
    if (s == "Sum") return Accumulation::Sum;
    if (s == "EMA") return Accumulation::Ema;
    throw ConfigInvalidError("unknown accumulation mode: " + s);
}

void OptimizerConfig::validate() const {
    if (precondition_frequency < 1)
        throw ConfigInvalidError("precondition_frequency must be >= 1");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigInvalidError("betas must lie in [0, 1)");
    if (lr < 0.0 || eps <= 0.0 || damping < 0.0 || weight_decay < 0.0)
        throw ConfigInvalidError("lr/eps/damping/weight_decay out of range");
    if (block_dim_limit < 1) throw ConfigInvalidError("block_dim_limit must be >= 1");
}

OptimizerConfig OptimizerConfig::defaults_for(Method m) {
    OptimizerConfig cfg;
    cfg.method = m;
    switch (m) {
        case Method::AdamW:
            cfg.beta2 = 0.999;  // standard decoupled-weight-decay Adam
            cfg.accumulation = Accumulation::Sum;
            break;
        case Method::Shampoo:
            cfg.beta2 = 0.95;
            cfg.accumulation = Accumulation::Sum;
            break;
        case Method::Soap:
            cfg.beta2 = 0.95;
            cfg.accumulation = Accumulation::Ema;
            break;
    }
    return cfg;
}

std::string BlockSpec::id() const {
    return param_id + "[" + std::to_string(row_begin) + ":" + std::to_string(row_end) + "," +
           std::to_string(col_begin) + ":" + std::to_string(col_end) + "]";
}

std::vector<BlockSpec> partition_param(const std::string& param_id, Index rows, Index cols,
                                       Index limit) {
    if (limit < 1) throw ConfigInvalidError("partition_param: limit must be >= 1");
    if (rows < 1 || cols < 1) throw ShapeMismatchError("partition_param: empty parameter");
    std::vector<BlockSpec> out;
    for (Index r = 0; r < rows; r += limit) {
        const Index r_end = std::min(rows, r + limit);
        for (Index c = 0; c < cols; c += limit) {
            const Index c_end = std::min(cols, c + limit);
            out.push_back(BlockSpec{param_id, r, r_end, c, c_end, limit});
        }
    }
    return out;
}

PrecondBlock PrecondBlock::create(BlockSpec spec, Method method) {
    PrecondBlock b;
    const Index nr = spec.rows();
    const Index nc = spec.cols();
    b.spec = std::move(spec);
    b.factor_l = SymMatrix<double>::zero(nr);
    b.factor_r = SymMatrix<double>::zero(nc);
    b.inv_l = SymMatrix<double>::identity(nr);
    b.inv_r = SymMatrix<double>::identity(nc);
    b.basis_l = EigenPair<double>::identity(nr);
    b.basis_r = EigenPair<double>::identity(nc);
    b.rotated_m = Matd::Zero(nr, nc);
    b.rotated_v = Matd::Zero(nr, nc);
    // Default placement: factors stay on the training path, inverse
    // state is host-resident until prefetched.
    b.residency[TensorRole::FactorL] = TierTag::Hot;
    b.residency[TensorRole::FactorR] = TierTag::Hot;
    b.residency[TensorRole::InvFactorL] = TierTag::Host;
    b.residency[TensorRole::InvFactorR] = TierTag::Host;
    if (method == Method::Soap) {
        b.residency[TensorRole::BasisL] = TierTag::Host;
        b.residency[TensorRole::BasisR] = TierTag::Host;
        b.residency[TensorRole::RotatedM] = TierTag::Hot;
        b.residency[TensorRole::RotatedV] = TierTag::Hot;
    }
    return b;
}

FactorSnapshot snapshot_factors(const PrecondBlock& b) {
    FactorSnapshot snap{b.factor_l, b.factor_r, 0};
    const std::uint64_t hl = matrix_checksum(snap.factor_l.full());
    snap.checksum = matrix_checksum(snap.factor_r.full()) ^ (hl * 0x9e3779b97f4a7c15ull);
    return snap;
}

namespace {

double relative_damping(const SymMatrix<double>& m, double damping) {
    const Index n = m.dim();
    if (n == 0) return 0.0;
    return damping * m.full().trace() / static_cast<double>(n);
}

}  // namespace

RefreshResult compute_refresh(const FactorSnapshot& snap, const OptimizerConfig& cfg) {
    RefreshResult out;
    if (cfg.method == Method::Soap) {
        out.soap = true;
        out.basis_l = sym_eig(snap.factor_l);
        out.basis_r = sym_eig(snap.factor_r);
        out.inv_l = SymMatrix<double>::identity(snap.factor_l.dim());
        out.inv_r = SymMatrix<double>::identity(snap.factor_r.dim());
    } else {
        out.inv_l = inv_root(snap.factor_l, 4, relative_damping(snap.factor_l, cfg.damping));
        out.inv_r = inv_root(snap.factor_r, 4, relative_damping(snap.factor_r, cfg.damping));
    }
    return out;
}

void install_refresh(PrecondBlock& b, RefreshResult&& result, std::int64_t step) {
    if (result.soap) {
        // Moments live in the old basis; map them through Q_newᵀ·Q_old. The
        // second moment uses the entrywise-squared rotation, which keeps it
        // exactly nonnegative and reduces to the same permutation when the
        // factors are permuted.
        const Matd rot_l = result.basis_l.vectors.transpose() * b.basis_l.vectors;
        const Matd rot_r = result.basis_r.vectors.transpose() * b.basis_r.vectors;
        b.rotated_m = rot_l * b.rotated_m * rot_r.transpose();
        const Matd rot_l2 = rot_l.cwiseProduct(rot_l);
        const Matd rot_r2 = rot_r.cwiseProduct(rot_r);
        b.rotated_v = rot_l2 * b.rotated_v * rot_r2.transpose();
        b.basis_l = std::move(result.basis_l);
        b.basis_r = std::move(result.basis_r);
    } else {
        b.inv_l = std::move(result.inv_l);
        b.inv_r = std::move(result.inv_r);
    }
    b.version += 1;
    b.last_refresh_step = step;
}

PrecondBlock refresh_inverse(const PrecondBlock& b, const OptimizerConfig& cfg,
                             std::int64_t step) {
    PrecondBlock out = b;
    install_refresh(out, compute_refresh(snapshot_factors(b), cfg), step);
    return out;
}

void accumulate_factors(PrecondBlock& b, const Eigen::Ref<const Matd>& g,
                        const OptimizerConfig& cfg) {
    if (g.rows() != b.spec.rows() || g.cols() != b.spec.cols())
        throw ShapeMismatchError("accumulate_factors: gradient shape mismatch for " +
                                 b.spec.id());
    if (!g.allFinite()) throw NonFiniteError("accumulate_factors: non-finite gradient");
    const SymMatrix<double> gl = gram_left(g);
    const SymMatrix<double> gr = gram_right(g);
    if (cfg.accumulation == Accumulation::Sum) {
        b.factor_l.full() += gl.full();
        b.factor_r.full() += gr.full();
    } else {
        const double beta = cfg.beta2;
        b.factor_l.full() = beta * b.factor_l.full() + (1.0 - beta) * gl.full();
        b.factor_r.full() = beta * b.factor_r.full() + (1.0 - beta) * gr.full();
    }
}

Matd precondition_shampoo(const PrecondBlock& b, const Eigen::Ref<const Matd>& g) {
    if (b.version == 0)
        throw StaleUninitializedError("precondition_shampoo: no inverse installed for " +
                                      b.spec.id());
    if (g.rows() != b.spec.rows() || g.cols() != b.spec.cols())
        throw ShapeMismatchError("precondition_shampoo: gradient shape mismatch");
    return b.inv_l.full() * g * b.inv_r.full();
}

Matd precondition_soap(PrecondBlock& b, const Eigen::Ref<const Matd>& g,
                       const OptimizerConfig& cfg) {
    if (b.version == 0)
        throw StaleUninitializedError("precondition_soap: no basis installed for " +
                                      b.spec.id());
    return soap_scaled_step(b, g, cfg);
}

Matd soap_scaled_step(PrecondBlock& b, const Eigen::Ref<const Matd>& g,
                      const OptimizerConfig& cfg) {
    if (g.rows() != b.spec.rows() || g.cols() != b.spec.cols())
        throw ShapeMismatchError("precondition_soap: gradient shape mismatch");
    const Matd rotated = b.basis_l.vectors.transpose() * g * b.basis_r.vectors;
    b.moment_steps += 1;
    const double t = static_cast<double>(b.moment_steps);
    b.rotated_m = cfg.beta1 * b.rotated_m + (1.0 - cfg.beta1) * rotated;
    b.rotated_v = cfg.beta2 * b.rotated_v + (1.0 - cfg.beta2) * rotated.cwiseProduct(rotated);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const Matd m_hat = b.rotated_m / bc1;
    const Matd v_hat = b.rotated_v / bc2;
    const Matd scaled = (m_hat.array() / (v_hat.array().sqrt() + cfg.eps)).matrix();
    return b.basis_l.vectors * scaled * b.basis_r.vectors.transpose();
}

AdamState AdamState::zeros(Index rows, Index cols) {
    return AdamState{Matd::Zero(rows, cols), Matd::Zero(rows, cols), 0};
}

Matd adamw_step(AdamState& state, const Eigen::Ref<const Matd>& g, const OptimizerConfig& cfg) {
    if (!g.allFinite()) throw NonFiniteError("adamw_step: non-finite gradient");
    if (g.rows() != state.m.rows() || g.cols() != state.m.cols())
        throw ShapeMismatchError("adamw_step: gradient shape mismatch");
    state.t += 1;
    const double t = static_cast<double>(state.t);
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const Matd m_hat = state.m / bc1;
    const Matd v_hat = state.v / bc2;
    return (m_hat.array() / (v_hat.array().sqrt() + cfg.eps)).matrix();
}

void apply_update(Eigen::Ref<Matd> theta, const Eigen::Ref<const Matd>& update,
                  const OptimizerConfig& cfg, double lr_scale) {
    if (theta.rows() != update.rows() || theta.cols() != update.cols())
        throw ShapeMismatchError("apply_update: shape mismatch");
    if (!update.allFinite()) throw NonFiniteError("apply_update: non-finite update");
    const double lr = cfg.lr * lr_scale;
    theta -= lr * (update + cfg.weight_decay * theta).eval();
}

Vecd replicated_state(const PrecondBlock& b, Method method) {
    const Index nr = b.spec.rows();
    const Index nc = b.spec.cols();
    Vecd flat(nr * nr + nc * nc);
    if (method == Method::Soap) {
        flat.head(nr * nr) = Eigen::Map<const Vecd>(b.basis_l.vectors.data(), nr * nr);
        flat.tail(nc * nc) = Eigen::Map<const Vecd>(b.basis_r.vectors.data(), nc * nc);
    } else {
        flat.head(nr * nr) = Eigen::Map<const Vecd>(b.inv_l.full().data(), nr * nr);
        flat.tail(nc * nc) = Eigen::Map<const Vecd>(b.inv_r.full().data(), nc * nc);
    }
    return flat;
}

void load_replicated_state(PrecondBlock& b, Method method, const Eigen::Ref<const Vecd>& flat) {
    const Index nr = b.spec.rows();
    const Index nc = b.spec.cols();
    if (flat.size() != nr * nr + nc * nc)
        throw ShapeMismatchError("load_replicated_state: size mismatch");
    if (method == Method::Soap) {
        Eigen::Map<Vecd>(b.basis_l.vectors.data(), nr * nr) = flat.head(nr * nr);
        Eigen::Map<Vecd>(b.basis_r.vectors.data(), nc * nc) = flat.tail(nc * nc);
    } else {
        Eigen::Map<Vecd>(b.inv_l.full().data(), nr * nr) = flat.head(nr * nr);
        Eigen::Map<Vecd>(b.inv_r.full().data(), nc * nc) = flat.tail(nc * nc);
    }
}

}  // namespace asopt
