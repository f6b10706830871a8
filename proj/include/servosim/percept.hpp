#pragma once

// Perception stage: affine alignment of pseudo-depth, binary obstacle
// masking, mask statistics, and the left/right/center avoidance decision.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "servosim/simcam.hpp"

namespace servosim {

enum class AvoidDirection { Left, Right, Center };

inline const char* to_string(AvoidDirection d) {
    switch (d) {
        case AvoidDirection::Left: return "LEFT";
        case AvoidDirection::Right: return "RIGHT";
        default: return "CENTER";
    }
}

struct AvoidCommandMsg {
    AvoidDirection direction = AvoidDirection::Center;
    double white_fraction = 0.0;
    uint32_t seq = 0;
};

struct AffineFit {
    double s = 1.0;  // scale
    double t = 0.0;  // shift
};

inline constexpr double kAlignVarianceMin = 1e-12;

// Least-squares (s, t) minimizing sum (s*d_i + t - d_star_i)^2, closed form
// from the 2x2 normal equations. Constant d leaves the scale unobservable.
inline std::optional<AffineFit> align_depth(std::span<const double> d,
                                            std::span<const double> d_star) {
    if (d.size() != d_star.size()) throw std::invalid_argument("align_depth: length mismatch");
    size_t n = d.size();
    if (n < 2) throw std::invalid_argument("align_depth: need at least 2 samples");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        sx += d[i];
        sy += d_star[i];
        sxx += d[i] * d[i];
        sxy += d[i] * d_star[i];
    }
    double mean = sx / n;
    double var = sxx / n - mean * mean;
    if (!(var > kAlignVarianceMin)) return std::nullopt;  // unobservable scale
    double denom = n * sxx - sx * sx;
    AffineFit fit;
    fit.s = (n * sxy - sx * sy) / denom;
    fit.t = (sy - fit.s * sx) / n;
    if (!std::isfinite(fit.s) || !std::isfinite(fit.t)) return std::nullopt;
    return fit;
}

struct ObstacleMask {
    int width = 0, height = 0;
    std::vector<uint8_t> bits;  // row-major, 0/1

    uint8_t at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x]; }
};

// bit = 1 iff value strictly exceeds tau; values equal to tau stay clear.
inline ObstacleMask obstacle_mask(const DepthMap& depth, double tau) {
    if (!std::isfinite(tau)) throw std::invalid_argument("obstacle_mask: tau must be finite");
    ObstacleMask m;
    m.width = depth.width;
    m.height = depth.height;
    m.bits.resize(depth.values.size());
    for (size_t i = 0; i < depth.values.size(); ++i) m.bits[i] = depth.values[i] > tau ? 1 : 0;
    return m;
}

struct MaskStats {
    long white_count = 0;
    double white_fraction = 0.0;
    std::optional<double> centroid_x;  // pixel index mean; absent when empty
    std::optional<double> centroid_y;
};

inline MaskStats mask_stats(const ObstacleMask& mask) {
    MaskStats s;
    double sx = 0, sy = 0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y)) {
                ++s.white_count;
                sx += x;
                sy += y;
            }
    size_t total = mask.bits.size();
    s.white_fraction = total ? static_cast<double>(s.white_count) / total : 0.0;
    if (s.white_count > 0) {
        s.centroid_x = sx / s.white_count;
        s.centroid_y = sy / s.white_count;
    }
    return s;
}

struct DecisionParams {
    double tau = 900.0;       // raw depth threshold
    double area_min = 0.05;   // white fraction below this is "insufficient"
    double left_bound = 1.0 / 3.0;   // on pixel-center normalized x
    double right_bound = 2.0 / 3.0;
};

// Thirds partition on the pixel-center coordinate (x + 0.5) / width, which
// mirrors exactly under horizontal flips.
inline AvoidDirection decide_command(const MaskStats& stats, int width, const DecisionParams& p) {
    if (stats.white_fraction < p.area_min || !stats.centroid_x) return AvoidDirection::Center;
    double u = (*stats.centroid_x + 0.5) / width;
    if (u < p.left_bound) return AvoidDirection::Left;
    if (u > p.right_bound) return AvoidDirection::Right;
    return AvoidDirection::Center;
}

struct PerceptParams {
    DecisionParams decision;
    double rate_hz = 4.0;       // decision rate; faster frames are dropped
    bool align_in_loop = false; // re-fit scale/shift against reference samples
    int align_samples = 64;
};

// One frame in, one command out. Reference samples are optional; when absent
// (or degenerate) the threshold operates on raw values, which is the deployed
// default: the raw threshold already encodes the expected response range.
class PerceptionPipeline {
  public:
    explicit PerceptionPipeline(const PerceptParams& params = {}) : params_(params) {}

    AvoidCommandMsg process(const DepthMap& depth, uint32_t seq,
                            const std::vector<DepthRefSample>* refs = nullptr) const {
        const DepthMap* input = &depth;
        DepthMap aligned;
        if (params_.align_in_loop && refs && refs->size() >= 2) {
            std::vector<double> d, d_star;
            d.reserve(refs->size());
            d_star.reserve(refs->size());
            for (const auto& r : *refs) {
                if (r.x < 0 || r.x >= depth.width || r.y < 0 || r.y >= depth.height) continue;
                d.push_back(depth.at(r.x, r.y));
                d_star.push_back(r.value);
            }
            if (d.size() >= 2) {
                if (auto fit = align_depth(d, d_star)) {
                    aligned = depth;
                    for (auto& v : aligned.values) v = fit->s * v + fit->t;
                    input = &aligned;
                }
            }
        }
        ObstacleMask mask = obstacle_mask(*input, params_.decision.tau);
        MaskStats stats = mask_stats(mask);
        AvoidCommandMsg msg;
        msg.direction = decide_command(stats, mask.width, params_.decision);
        msg.white_fraction = stats.white_fraction;
        msg.seq = seq;
        return msg;
    }

    const PerceptParams& params() const { return params_; }

  private:
    PerceptParams params_;
};

}  // namespace servosim
