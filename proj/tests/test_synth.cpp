#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "gsconv/synth.hpp"
#include "gsconv/training.hpp"

using namespace gsconv;

namespace {

TaskSpec long_range_spec(std::uint64_t seed = 0) {
    TaskSpec spec;
    spec.kind = TaskKind::LongRange;
    spec.d = 32;
    spec.h = 32;
    spec.w = 16;
    spec.seed = seed;
    spec.count = 200;
    return spec;
}

// Voxel-local Bayes classifier: intensity histogram per class from training
// samples, argmax posterior at evaluation time. This is the strongest
// classifier that sees one voxel at a time.
class HistogramOracle {
public:
    HistogramOracle(const TaskSpec& spec, index_t train_count)
        : lo_(-3.0), hi_(4.0), bins_(140), counts_(3, std::vector<double>(bins_, 1.0)) {
        for (index_t i = 0; i < train_count; ++i) {
            const Sample s = gen_sample(spec, i);
            for (index_t v = 0; v < s.volume.size(); ++v) {
                const auto cls = static_cast<std::size_t>(s.label[v]);
                counts_[cls][bin(s.volume[v])] += 1.0;
            }
        }
    }

    double classify(double intensity) const {
        const std::size_t b = bin(intensity);
        std::size_t best = 0;
        for (std::size_t c = 1; c < 3; ++c)
            if (counts_[c][b] > counts_[best][b]) best = c;
        return static_cast<double>(best);
    }

private:
    std::size_t bin(double v) const {
        const double t = std::clamp((v - lo_) / (hi_ - lo_), 0.0, 1.0);
        return std::min(static_cast<std::size_t>(t * static_cast<double>(bins_)), bins_ - 1);
    }

    double lo_, hi_;
    std::size_t bins_;
    std::vector<std::vector<double>> counts_;
};

double oracle_mdice(const TaskSpec& spec, index_t train_count, index_t eval_count) {
    const HistogramOracle oracle(spec, train_count);
    std::vector<double> dice_sums(2, 0.0);
    for (index_t i = 0; i < eval_count; ++i) {
        const Sample s = gen_sample(spec, train_count + i);
        VolumeTensor pred(s.label.dims());
        for (index_t v = 0; v < s.volume.size(); ++v) pred[v] = oracle.classify(s.volume[v]);
        const auto dice = dice_per_class(pred, s.label, 3);
        dice_sums[0] += dice[0];
        dice_sums[1] += dice[1];
    }
    return (dice_sums[0] + dice_sums[1]) / (2.0 * static_cast<double>(eval_count));
}

}  // namespace

TEST_CASE("regeneration is bit-identical") {
    const TaskSpec spec = long_range_spec(17);
    const Sample a = gen_sample(spec, 3);
    const Sample b = gen_sample(spec, 3);
    REQUIRE(a.volume.size() == b.volume.size());
    for (index_t i = 0; i < a.volume.size(); ++i) {
        CHECK(a.volume[i] == b.volume[i]);
        CHECK(a.label[i] == b.label[i]);
    }
    const Sample c = gen_sample(spec, 4);
    bool all_same = true;
    for (index_t i = 0; i < a.volume.size() && all_same; ++i)
        all_same = a.volume[i] == c.volume[i];
    CHECK(!all_same);
}

TEST_CASE("labels are valid and foreground is nonempty") {
    for (const TaskKind kind : {TaskKind::LongRange, TaskKind::LocalPattern}) {
        TaskSpec spec = long_range_spec(2);
        spec.kind = kind;
        for (index_t i = 0; i < 20; ++i) {
            const Sample s = gen_sample(spec, i);
            index_t fg = 0;
            for (index_t v = 0; v < s.label.size(); ++v) {
                const double lv = s.label[v];
                CHECK(lv >= 0.0);
                CHECK(lv <= 2.0);
                CHECK(lv == std::floor(lv));
                if (lv > 0.0) ++fg;
            }
            CHECK(fg == kBlobSize * kBlobSize * kBlobSize);
        }
    }
}

TEST_CASE("class balance over 200 samples") {
    const TaskSpec spec = long_range_spec(23);
    index_t class1 = 0, class2 = 0;
    for (index_t i = 0; i < spec.count; ++i) {
        const Sample s = gen_sample(spec, i);
        double cls = 0.0;
        for (index_t v = 0; v < s.label.size(); ++v)
            if (s.label[v] > 0.0) {
                cls = s.label[v];
                break;
            }
        if (cls == 1.0) ++class1;
        if (cls == 2.0) ++class2;
    }
    const double f1 = static_cast<double>(class1) / static_cast<double>(spec.count);
    const double f2 = static_cast<double>(class2) / static_cast<double>(spec.count);
    CHECK(f1 >= 0.4);
    CHECK(f1 <= 0.6);
    CHECK(f2 >= 0.4);
    CHECK(f2 <= 0.6);
}

TEST_CASE("marker-target distance exceeds half the volume extent in every sample") {
    const TaskSpec spec = long_range_spec(29);
    const double half_extent = static_cast<double>(std::max({spec.d, spec.h, spec.w})) / 2.0;
    for (index_t i = 0; i < 100; ++i) {
        const LongRangeLayout lay = long_range_layout(spec, i);
        CHECK(lay.marker_blob_distance() > half_extent);
    }
}

TEST_CASE("flipping the marker sign flips the class and nothing else") {
    const TaskSpec spec = long_range_spec(31);
    const LongRangeLayout lay = long_range_layout(spec, 0);
    const Sample plus = gen_sample(spec, 0, +1);
    const Sample minus = gen_sample(spec, 0, -1);

    // Identical label support, different class id.
    for (index_t v = 0; v < plus.label.size(); ++v) {
        CHECK((plus.label[v] > 0.0) == (minus.label[v] > 0.0));
        if (plus.label[v] > 0.0) {
            CHECK(plus.label[v] == 1.0);
            CHECK(minus.label[v] == 2.0);
        }
    }

    // Volumes differ only inside the marker and decoy cubes, and there they
    // share the noise draws while the cube means flip: the difference is
    // exactly twice the cube mean.
    auto inside = [](const index_t start[3], index_t x, index_t y, index_t z) {
        return x >= start[0] && x < start[0] + kMarkerSize && y >= start[1] &&
               y < start[1] + kMarkerSize && z >= start[2] && z < start[2] + kMarkerSize;
    };
    for (index_t x = 0; x < spec.d; ++x)
        for (index_t y = 0; y < spec.h; ++y)
            for (index_t z = 0; z < spec.w; ++z) {
                const double a = plus.volume.at(0, x, y, z, 0);
                const double b = minus.volume.at(0, x, y, z, 0);
                if (inside(lay.marker, x, y, z))
                    CHECK(a - b == doctest::Approx(3.0).epsilon(1e-9));
                else if (inside(lay.decoy, x, y, z))
                    CHECK(a - b == doctest::Approx(-3.0).epsilon(1e-9));
                else
                    CHECK(a == b);
            }
}

TEST_CASE("dims too small to separate marker and target are rejected") {
    TaskSpec spec = long_range_spec();
    spec.d = 16;
    spec.h = 16;
    CHECK_THROWS_AS(gen_sample(spec, 0), ConfigError);

    TaskSpec wide = long_range_spec();
    wide.w = 64;  // wider than both depth and height
    CHECK_THROWS_AS(gen_sample(wide, 0), ConfigError);

    TaskSpec odd = long_range_spec();
    odd.d = 40;  // not divisible by 16
    CHECK_THROWS_AS(gen_sample(odd, 0), ConfigError);
}

TEST_CASE("voxel-local Bayes oracle cannot solve LongRange but solves LocalPattern") {
    const TaskSpec lr = long_range_spec(41);
    const double lr_mdice = oracle_mdice(lr, 100, 50);
    CHECK(lr_mdice <= 0.55);

    TaskSpec local = long_range_spec(41);
    local.kind = TaskKind::LocalPattern;
    const double local_mdice = oracle_mdice(local, 100, 50);
    CHECK(local_mdice >= 0.80);
}

TEST_CASE("dataset wrapper exposes consistent samples") {
    const TaskSpec spec = long_range_spec(47);
    const SynthDataset data(spec, 0, 10);
    CHECK(data.size() == 10);
    CHECK(data.num_classes() == 3);
    const Sample direct = gen_sample(spec, 7);
    for (index_t v = 0; v < direct.volume.size(); ++v) {
        CHECK(data.volume(7)[v] == direct.volume[v]);
        CHECK(data.label(7)[v] == direct.label[v]);
    }
}
