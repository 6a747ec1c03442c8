#include "maelab/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace maelab {

std::vector<LesionKind> SyntheticSpec::resolved_kinds() const {
    if (!lesion_kinds.empty()) {
        if (lesion_kinds.size() != n_classes)
            throw std::invalid_argument("SyntheticSpec: lesion_kinds size != n_classes");
        return lesion_kinds;
    }
    // distinct sizes and signs per class, cycling beyond four
    static const LesionKind base[4] = {
        {0.10, 0.16, 0.22},
        {0.08, 0.12, -0.20},
        {0.12, 0.18, 0.16},
        {0.07, 0.10, -0.25},
    };
    std::vector<LesionKind> out(n_classes);
    for (std::size_t k = 0; k < n_classes; ++k) out[k] = base[k % 4];
    return out;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

struct Lesion {
    double cx, cy, radius, delta;
};

double lesion_field(const Lesion& l, double x, double y) {
    const double r2 = (x - l.cx) * (x - l.cx) + (y - l.cy) * (y - l.cy);
    const double rr = l.radius * l.radius;
    if (r2 >= rr) return 0.0;
    const double t = 1.0 - r2 / rr;
    return l.delta * t * t;
}

Box support_box(const Lesion& l, std::size_t size) {
    // tight pixel bbox of {f != 0}
    double xmin = size, xmax = -1, ymin = size, ymax = -1;
    const auto lo_x = static_cast<long>(std::floor(l.cx - l.radius));
    const auto hi_x = static_cast<long>(std::ceil(l.cx + l.radius));
    const auto lo_y = static_cast<long>(std::floor(l.cy - l.radius));
    const auto hi_y = static_cast<long>(std::ceil(l.cy + l.radius));
    for (long y = std::max(0l, lo_y); y <= std::min<long>(size - 1, hi_y); ++y)
        for (long x = std::max(0l, lo_x); x <= std::min<long>(size - 1, hi_x); ++x)
            if (lesion_field(l, x, y) != 0.0) {
                xmin = std::min(xmin, static_cast<double>(x));
                xmax = std::max(xmax, static_cast<double>(x));
                ymin = std::min(ymin, static_cast<double>(y));
                ymax = std::max(ymax, static_cast<double>(y));
            }
    if (xmax < xmin) return {};  // no support pixels (degenerate radius)
    return {xmin, ymin, xmax - xmin + 1, ymax - ymin + 1};
}

}  // namespace

Image synthetic_background(const SyntheticSpec& spec, std::uint64_t index) {
    const std::size_t S = spec.image_size;
    Image img = Image::zeros(S, S, 1);

    // template family: fixed for the whole corpus
    Rng tmpl(mix(spec.seed, 0xbac6));
    const double base = tmpl.uniform(0.40, 0.48);
    const double grad_angle = tmpl.uniform(0.0, 2.0 * std::numbers::pi);
    const double grad_amp = tmpl.uniform(0.04, 0.07);
    const double f1 = tmpl.uniform(1.0, 2.0), p1 = tmpl.uniform(0.0, 6.28);
    const double f2 = tmpl.uniform(2.0, 3.5), p2 = tmpl.uniform(0.0, 6.28);
    const double a1 = tmpl.uniform(0.02, 0.04), a2 = tmpl.uniform(0.015, 0.03);

    // per-sample wobble: coarse control grid, bilinearly upsampled
    Rng wob(mix(spec.seed, mix(0x77ab, index)));
    constexpr std::size_t G = 4;
    double ctrl[G][G];
    for (auto& row : ctrl)
        for (auto& v : row) v = wob.uniform(-spec.noise_amp, spec.noise_amp);
    const double shift = wob.uniform(-0.015, 0.015);

    const double gx = std::cos(grad_angle), gy = std::sin(grad_angle);
    for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
            const double u = static_cast<double>(x) / (S - 1);
            const double v = static_cast<double>(y) / (S - 1);
            double val = base + shift + grad_amp * (gx * (u - 0.5) + gy * (v - 0.5));
            val += a1 * std::sin(2.0 * std::numbers::pi * f1 * u + p1);
            val += a2 * std::sin(2.0 * std::numbers::pi * f2 * v + p2);
            // bilinear over the control grid
            const double cu = u * (G - 1), cv = v * (G - 1);
            const auto i0 = std::min<std::size_t>(static_cast<std::size_t>(cu), G - 2);
            const auto j0 = std::min<std::size_t>(static_cast<std::size_t>(cv), G - 2);
            const double du = cu - i0, dv = cv - j0;
            val += (ctrl[j0][i0] * (1 - du) + ctrl[j0][i0 + 1] * du) * (1 - dv) +
                   (ctrl[j0 + 1][i0] * (1 - du) + ctrl[j0 + 1][i0 + 1] * du) * dv;
            img.at(0, y, x) = static_cast<float>(val);
        }
    return img;
}

SyntheticSample generate_synthetic(const SyntheticSpec& spec, std::uint64_t index) {
    const std::size_t S = spec.image_size;
    const auto kinds = spec.resolved_kinds();

    SyntheticSample out;
    out.image = synthetic_background(spec, index);
    out.labels.assign(spec.n_classes, 0);

    std::vector<Lesion> placed;
    for (std::size_t k = 0; k < spec.n_classes; ++k) {
        Rng draw(mix(spec.seed, mix(0x1e51, index * 1000 + k)));
        if (!draw.bernoulli(spec.lesion_prior)) continue;

        const LesionKind& kind = kinds[k];
        bool ok = false;
        Lesion lesion{};
        for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
            const double r = draw.uniform(kind.radius_lo, kind.radius_hi) * S;
            const double margin = r + 1.0;
            lesion = {draw.uniform(margin, S - 1 - margin), draw.uniform(margin, S - 1 - margin),
                      r, kind.delta};
            ok = true;
            for (const auto& other : placed) {
                const double d = std::hypot(lesion.cx - other.cx, lesion.cy - other.cy);
                if (d < lesion.radius + other.radius + 1.5) {
                    ok = false;
                    break;
                }
            }
        }
        if (!ok) continue;  // no non-overlapping slot found; drop lesion and label

        Box box = support_box(lesion, S);
        if (box.w <= 0 || box.h <= 0) continue;
        placed.push_back(lesion);
        out.labels[k] = 1;
        out.boxes.push_back({k, box});
        for (std::size_t y = 0; y < S; ++y)
            for (std::size_t x = 0; x < S; ++x)
                out.image.at(0, y, x) +=
                    static_cast<float>(lesion_field(lesion, x, y));
    }
    for (auto& v : out.image.data) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

AnomalySample inject_anomaly(const SyntheticSpec& spec, const Image& base, std::uint64_t index) {
    const std::size_t S = base.width;
    Rng rng(mix(spec.seed, mix(0xa0a1, index)));

    AnomalySample out;
    out.image = base;
    const float delta = 0.35f;

    const bool bar = rng.bernoulli(0.5);
    const std::size_t thickness = 2 + rng.below(2);
    const std::size_t length = S / 4 + rng.below(std::max<std::size_t>(1, S / 4));
    const std::size_t margin = 2;
    const std::size_t span = std::max<std::size_t>(1, S - length - 2 * margin);
    const std::size_t x0 = margin + rng.below(span);
    const std::size_t y0 = margin + rng.below(span);

    auto paint = [&](std::size_t x, std::size_t y) {
        out.image.at(0, y, x) = std::min(1.0f, out.image.at(0, y, x) + delta);
    };
    if (bar) {
        // straight bar, horizontal or vertical
        const bool horizontal = rng.bernoulli(0.5);
        for (std::size_t t = 0; t < thickness; ++t)
            for (std::size_t i = 0; i < length; ++i)
                horizontal ? paint(x0 + i, y0 + t) : paint(x0 + t, y0 + i);
        out.box = horizontal
                      ? Box{static_cast<double>(x0), static_cast<double>(y0),
                            static_cast<double>(length), static_cast<double>(thickness)}
                      : Box{static_cast<double>(x0), static_cast<double>(y0),
                            static_cast<double>(thickness), static_cast<double>(length)};
    } else {
        // glyph-like L mark: one horizontal and one vertical stroke
        const std::size_t arm = length / 2 + 1;
        for (std::size_t t = 0; t < thickness; ++t) {
            for (std::size_t i = 0; i < arm; ++i) paint(x0 + i, y0 + t);
            for (std::size_t i = 0; i < arm; ++i) paint(x0 + t, y0 + i);
        }
        out.box = {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(arm),
                   static_cast<double>(arm)};
    }
    return out;
}

}  // namespace maelab
