// SPDX-License-Identifier: Apache-2.0
//
// Optimizer state machines and update rules: AdamW, Shampoo (two-sided
// inverse fourth roots), SOAP (Adam in the eigenbasis of the Kronecker
// factors), factor accumulation, and parameter blocking under a maximum
// preconditioner dimension.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "asopt/densela.hpp"
#include "asopt/tiers.hpp"

namespace asopt {

enum class Method { AdamW, Shampoo, Soap };
enum class Accumulation { Sum, Ema };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
std::string to_string(Accumulation a);
Accumulation accumulation_from_string(const std::string& s);

struct OptimizerConfig {
    Method method = Method::AdamW;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::int64_t precondition_frequency = 10;  // pf
    Accumulation accumulation = Accumulation::Sum;
    double damping = 1e-8;  // relative: effective eps = damping * trace/dim
    Index block_dim_limit = 2048;

    void validate() const;

    /// Per-method defaults: AdamW uses the standard (0.9, 0.999) betas;
    /// Shampoo accumulates by Sum; SOAP uses EMA statistics with beta2 = 0.95.
    static OptimizerConfig defaults_for(Method m);
};

/// One tile of a parameter, bounded by block_dim_limit per side.
struct BlockSpec {
    std::string param_id;
    Index row_begin = 0, row_end = 0;
    Index col_begin = 0, col_end = 0;
    Index block_dim_limit = 0;

    Index rows() const { return row_end - row_begin; }
    Index cols() const { return col_end - col_begin; }
    std::string id() const;
};

/// Row-major tiling, full-sized tiles first and remainders last on each axis.
std::vector<BlockSpec> partition_param(const std::string& param_id, Index rows, Index cols,
                                       Index limit);

/// One parameter block's second-order state.
struct PrecondBlock {
    BlockSpec spec;
    SymMatrix<double> factor_l, factor_r;  // accumulated statistics, hot tier
    SymMatrix<double> inv_l, inv_r;        // installed inverse roots (Shampoo)
    EigenPair<double> basis_l, basis_r;    // installed eigenbases (SOAP)
    Matd rotated_m, rotated_v;             // SOAP moments in the installed basis
    std::uint64_t version = 0;
    std::int64_t last_refresh_step = -1;
    std::int64_t moment_steps = 0;  // Adam bias-correction counter (SOAP)
    std::map<TensorRole, TierTag> residency;

    static PrecondBlock create(BlockSpec spec, Method method);
};

/// Copies of the tensors a refresh job reads; taken on the training thread
/// at dispatch so the job is isolated from further factor updates.
struct FactorSnapshot {
    SymMatrix<double> factor_l, factor_r;
    std::uint64_t checksum = 0;
};

struct RefreshResult {
    SymMatrix<double> inv_l, inv_r;  // Shampoo
    EigenPair<double> basis_l, basis_r;  // SOAP
    bool soap = false;
};

FactorSnapshot snapshot_factors(const PrecondBlock& b);

/// The expensive pure part of a refresh; safe on any worker thread.
RefreshResult compute_refresh(const FactorSnapshot& snap, const OptimizerConfig& cfg);

/// Swaps the refreshed tensors into the block, re-projects SOAP moments into
/// the new basis, bumps version, records the install step. Training thread
/// only.
void install_refresh(PrecondBlock& b, RefreshResult&& result, std::int64_t step);

/// Synchronous composition of compute + install; pure over the input block.
PrecondBlock refresh_inverse(const PrecondBlock& b, const OptimizerConfig& cfg,
                             std::int64_t step);

/// L += G·Gᵀ, R += Gᵀ·G (Sum) or EMA with coefficient beta2.
void accumulate_factors(PrecondBlock& b, const Eigen::Ref<const Matd>& g,
                        const OptimizerConfig& cfg);

/// G̃ = inv_L · G · inv_R.
Matd precondition_shampoo(const PrecondBlock& b, const Eigen::Ref<const Matd>& g);

/// G̃ = Q_L · φ(Q_Lᵀ G Q_R) · Q_Rᵀ with φ the bias-corrected Adam scaling in
/// the rotated coordinates; updates rotated moments in place.
Matd precondition_soap(PrecondBlock& b, const Eigen::Ref<const Matd>& g,
                       const OptimizerConfig& cfg);

/// The same scaling against whatever bases the block currently holds
/// (identity before the first refresh lands); used for the cold-start path
/// where no refreshed basis has been installed yet.
Matd soap_scaled_step(PrecondBlock& b, const Eigen::Ref<const Matd>& g,
                      const OptimizerConfig& cfg);

struct AdamState {
    Matd m, v;
    std::int64_t t = 0;
    static AdamState zeros(Index rows, Index cols);
};

/// Returns the bias-corrected Adam direction m̂/(√v̂ + eps); weight decay is
/// applied by apply_update, never to the moments.
Matd adamw_step(AdamState& state, const Eigen::Ref<const Matd>& g, const OptimizerConfig& cfg);

/// θ ← θ − lr_scale·lr·(update + weight_decay·θ).
void apply_update(Eigen::Ref<Matd> theta, const Eigen::Ref<const Matd>& update,
                  const OptimizerConfig& cfg, double lr_scale = 1.0);

/// Flattened view of the state the coherence layer replicates across ranks:
/// inverse factors for Shampoo, eigenbases for SOAP.
Vecd replicated_state(const PrecondBlock& b, Method method);
void load_replicated_state(PrecondBlock& b, Method method, const Eigen::Ref<const Vecd>& flat);

}  // namespace asopt
