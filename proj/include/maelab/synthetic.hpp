#pragma once

#include "maelab/image.hpp"
#include "maelab/metrics.hpp"
#include "maelab/rng.hpp"

namespace maelab {

// Blob lesion family for one class: radii as fractions of the image side,
// signed intensity delta.
struct LesionKind {
    double radius_lo = 0.08;
    double radius_hi = 0.14;
    double delta = 0.2;
};

// Pseudo-radiograph recipe. Backgrounds share one template family (drawn
// from `seed` alone) with small low-frequency per-index variation, so the
// corpus mimics a fixed imaging protocol. Generation is a pure function of
// (spec, index).
struct SyntheticSpec {
    std::uint64_t seed = 0;
    std::size_t image_size = 32;
    std::size_t n_classes = 4;
    double lesion_prior = 0.3;            // per-class Bernoulli
    std::vector<LesionKind> lesion_kinds;  // defaulted per class when empty
    double noise_amp = 0.04;              // per-index background wobble

    std::vector<LesionKind> resolved_kinds() const;
};

struct LabeledBox {
    std::size_t cls = 0;
    Box box;
};

struct SyntheticSample {
    Image image;
    std::vector<int> labels;  // multi-hot over n_classes
    std::vector<LabeledBox> boxes;
};

// The sample's background exactly as generate_synthetic composed it; test
// oracles scan |image - background| against it.
Image synthetic_background(const SyntheticSpec& spec, std::uint64_t index);

// Background + zero or more compact-support lesions. Lesion supports never
// overlap; each box is the tight bounding box of its lesion's support pixels.
SyntheticSample generate_synthetic(const SyntheticSpec& spec, std::uint64_t index);

struct AnomalySample {
    Image image;
    Box box;
};
// Adds one bright bar or glyph-like mark to `base`; placement is a pure
// function of (spec, index).
AnomalySample inject_anomaly(const SyntheticSpec& spec, const Image& base, std::uint64_t index);

}  // namespace maelab
