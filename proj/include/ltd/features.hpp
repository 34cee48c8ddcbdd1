#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ltd/core.hpp"

namespace ltd {

// ---------------------------------------------------------------------------
// Gilbert-Elliott two-state model: gap = reply received, burst = reply lost.

struct gilbert_elliot_params_t {
    double p_gg = 1.0;
    double p_bb = 0.0;

    double p_gb() const noexcept { return 1.0 - p_gg; }
    double p_bg() const noexcept { return 1.0 - p_bb; }

    // Stationary probability of the burst state.
    double stationary_loss() const noexcept {
        double denom = p_gb() + p_bg();
        return denom == 0.0 ? 0.0 : p_gb() / denom;
    }
};

struct transition_counts_t {
    std::uint64_t gg = 0, gb = 0, bg = 0, bb = 0;
};

inline transition_counts_t count_transitions(std::span<const std::uint8_t> bits) {
    transition_counts_t c;
    for (std::size_t i = 1; i < bits.size(); ++i) {
        bool from_burst = bits[i - 1] != 0;
        bool to_burst = bits[i] != 0;
        if (from_burst) {
            (to_burst ? c.bb : c.bg)++;
        } else {
            (to_burst ? c.gb : c.gg)++;
        }
    }
    return c;
}

// Maximum-likelihood fit by transition counting. A state that is never left gets the
// convention p = 0 for its self-transition, except that an all-received trace has p_gg = 1.
inline gilbert_elliot_params_t fit_gilbert_elliot(std::span<const std::uint8_t> bits) {
    if (bits.size() < 2) {
        throw std::invalid_argument("fit_gilbert_elliot: need at least 2 probes");
    }
    auto c = count_transitions(bits);
    gilbert_elliot_params_t p;
    std::uint64_t from_gap = c.gg + c.gb;
    std::uint64_t from_burst = c.bb + c.bg;
    p.p_gg = from_gap == 0 ? 0.0 : static_cast<double>(c.gg) / static_cast<double>(from_gap);
    p.p_bb = from_burst == 0 ? 0.0 : static_cast<double>(c.bb) / static_cast<double>(from_burst);
    return p;
}

inline gilbert_elliot_params_t fit_gilbert_elliot(const loss_trace_t& trace) {
    auto bits = trace.loss_bits();
    return fit_gilbert_elliot(bits);
}

// ---------------------------------------------------------------------------
// Single change point (first step of binary segmentation).

struct change_point_config_t {
    double penalty_factor = 3.0; // penalty = factor * log(n)
    std::size_t min_segment = 2;
};

struct change_point_result_t {
    double position = 0.0; // split index / n, or 0 when nothing passes the penalty
    std::size_t index = 0;
    double gain = 0.0;
    bool short_trace = false;
};

// Twice the negative log-likelihood of `losses` out of `n` under a single loss probability.
// On 0/1 data the variance is p(1 - p), so this is the joint mean/variance cost; unlike the
// Gaussian form it stays finite on constant segments.
inline double segment_cost(std::uint64_t losses, std::uint64_t n) {
    if (losses == 0 || losses == n) {
        return 0.0;
    }
    double p = static_cast<double>(losses) / static_cast<double>(n);
    return -2.0 * (static_cast<double>(losses) * std::log(p) + static_cast<double>(n - losses) * std::log1p(-p));
}

inline change_point_result_t detect_change_point(std::span<const std::uint8_t> bits,
                                                 const change_point_config_t& cfg = {}) {
    change_point_result_t r;
    std::size_t n = bits.size();
    if (n < 4 || n < 2 * cfg.min_segment) {
        r.short_trace = true;
        return r;
    }
    std::vector<std::uint64_t> prefix(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        prefix[i + 1] = prefix[i] + (bits[i] != 0 ? 1 : 0);
    }
    double whole = segment_cost(prefix[n], n);
    double best = 0.0;
    std::size_t best_tau = 0;
    for (std::size_t tau = cfg.min_segment; tau + cfg.min_segment <= n; ++tau) {
        double c = segment_cost(prefix[tau], tau) + segment_cost(prefix[n] - prefix[tau], n - tau);
        if (best_tau == 0 || c < best) {
            best = c;
            best_tau = tau;
        }
    }
    r.gain = whole - best;
    if (r.gain > cfg.penalty_factor * std::log(static_cast<double>(n))) {
        r.index = best_tau;
        r.position = static_cast<double>(best_tau) / static_cast<double>(n);
    }
    return r;
}

inline double change_point(const loss_trace_t& trace, const change_point_config_t& cfg = {}) {
    auto bits = trace.loss_bits();
    return detect_change_point(bits, cfg).position;
}

// ---------------------------------------------------------------------------
// Alignment and correlation

// Folds the seed's loss bits into `buckets` consecutive groups, bucket k covering
// [floor(k n / buckets), floor((k + 1) n / buckets)), each valued by its number of losses.
inline std::vector<double> align_losses(std::span<const std::uint8_t> seed_bits, std::size_t buckets) {
    std::size_t n = seed_bits.size();
    if (buckets == 0 || buckets > n) {
        throw std::invalid_argument("align_losses: need 0 < buckets <= seed length");
    }
    std::vector<double> out(buckets, 0.0);
    for (std::size_t k = 0; k < buckets; ++k) {
        std::size_t lo = k * n / buckets;
        std::size_t hi = (k + 1) * n / buckets;
        for (std::size_t i = lo; i < hi; ++i) {
            out[k] += seed_bits[i] != 0 ? 1.0 : 0.0;
        }
    }
    return out;
}

struct correlation_result_t {
    double coefficient = 0.0;
    bool zero_variance = false;
};

// Zero-variance series give 0, flagged.
inline correlation_result_t pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("pearson: series must have equal length >= 2");
    }
    double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx;
        double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        return {0.0, true};
    }
    return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

inline correlation_result_t align_and_correlate(const loss_trace_t& seed, const loss_trace_t& other) {
    if (other.sent() < 2 || seed.sent() < other.sent()) {
        throw std::invalid_argument("align_and_correlate: need seed length >= other length >= 2");
    }
    auto seed_bits = seed.loss_bits();
    auto aligned = align_losses(seed_bits, other.sent());
    std::vector<double> y(other.sent());
    for (std::size_t i = 0; i < other.sent(); ++i) {
        y[i] = other.probes[i].received ? 0.0 : 1.0;
    }
    return pearson(aligned, y);
}

// ---------------------------------------------------------------------------
// Signature assembly

struct feature_config_t {
    change_point_config_t change_point;
    bool keep_traces = false;
};

// Missing controls contribute loss rate 0 and set the matching flag.
inline signature_t build_signature(const loss_trace_t& seed, const loss_trace_t& candidate,
                                   const loss_trace_t* control_s, const loss_trace_t* control_c,
                                   const feature_config_t& cfg = {}) {
    signature_t sig;
    sig.seed = seed.target;
    sig.candidate = candidate.target;
    auto& f = sig.features;

    f[loss_rate_s] = loss_rate(seed);
    f[loss_rate_c] = loss_rate(candidate);
    if (control_s != nullptr && control_s->sent() > 0) {
        f[loss_rate_ks] = loss_rate(*control_s);
    } else {
        sig.flags.missing_control_s = true;
    }
    if (control_c != nullptr && control_c->sent() > 0) {
        f[loss_rate_kc] = loss_rate(*control_c);
    } else {
        sig.flags.missing_control_c = true;
    }

    auto s_bits = seed.loss_bits();
    auto c_bits = candidate.loss_bits();
    auto cp_s = detect_change_point(s_bits, cfg.change_point);
    auto cp_c = detect_change_point(c_bits, cfg.change_point);
    f[change_point_s] = cp_s.position;
    f[change_point_c] = cp_c.position;
    sig.flags.short_trace = cp_s.short_trace || cp_c.short_trace;

    if (s_bits.size() < 2 || c_bits.size() < 2) {
        throw std::invalid_argument("build_signature: traces need at least 2 probes");
    }
    auto ge_s = fit_gilbert_elliot(s_bits);
    auto ge_c = fit_gilbert_elliot(c_bits);
    f[gap_gap_s] = ge_s.p_gg;
    f[gap_gap_c] = ge_c.p_gg;
    f[burst_burst_s] = ge_s.p_bb;
    f[burst_burst_c] = ge_c.p_bb;

    auto corr = align_and_correlate(seed, candidate);
    f[pearson_sc] = corr.coefficient;
    sig.flags.zero_variance = corr.zero_variance;

    if (cfg.keep_traces) {
        signature_traces_t t{seed, candidate, std::nullopt, std::nullopt};
        if (control_s != nullptr) t.control_s = *control_s;
        if (control_c != nullptr) t.control_c = *control_c;
        sig.traces = std::move(t);
    }
    return sig;
}

} // namespace ltd
