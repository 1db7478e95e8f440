#pragma once

#include <cstdint>
#include <string>

#include "gsconv/tensor.hpp"
#include "gsconv/training.hpp"

namespace gsconv {

// Two deterministic volumetric segmentation tasks. Both place one labeled
// blob over Gaussian background noise; they differ in where the class
// information lives:
//
//   LongRange    - the blob's class (1 or 2) is carried solely by the sign
//                  of a small marker cube in the opposite corner of the
//                  volume, farther away than half the volume extent. An
//                  opposite-signed decoy cube at the mirrored position makes
//                  every location-blind statistic of the volume identically
//                  distributed across the two classes, so only spatial
//                  information routing can recover the class.
//   LocalPattern - the blob's class is its own intensity band; a voxel-local
//                  decision suffices.
enum class TaskKind { LongRange, LocalPattern };

TaskKind task_kind_from_string(const std::string& s);
std::string to_string(TaskKind kind);

struct TaskSpec {
    TaskKind kind{TaskKind::LongRange};
    index_t d{32};
    index_t h{32};
    index_t w{16};
    index_t num_classes{3};
    std::uint64_t seed{0};
    index_t count{1};

    void validate() const;
};

struct Sample {
    VolumeTensor volume;  // (1, D, H, W, 1)
    VolumeTensor label;   // (1, D, H, W, 1) class ids
};

// Deterministic per (spec.seed, index). sign_override of +1/-1 regenerates a
// LongRange sample with the same noise stream and geometry but the marker
// sign forced, flipping the blob's class and nothing else.
Sample gen_sample(const TaskSpec& spec, index_t index, int sign_override = 0);

// Geometry of a LongRange sample, exposed for construction audits.
struct LongRangeLayout {
    index_t marker[3];  // cube start (3x3x3)
    index_t decoy[3];
    index_t blob[3];    // box start (6x6x6)
    int sign{1};

    double marker_blob_distance() const;
};
LongRangeLayout long_range_layout(const TaskSpec& spec, index_t index, int sign_override = 0);

constexpr index_t kMarkerSize = 3;
constexpr index_t kBlobSize = 6;

class SynthDataset : public Dataset {
public:
    SynthDataset(const TaskSpec& spec, index_t first_index, index_t count);

    index_t size() const override { return static_cast<index_t>(volumes_.size()); }
    const VolumeTensor& volume(index_t i) const override { return volumes_[static_cast<std::size_t>(i)]; }
    const VolumeTensor& label(index_t i) const override { return labels_[static_cast<std::size_t>(i)]; }
    index_t num_classes() const override { return num_classes_; }

private:
    std::vector<VolumeTensor> volumes_;
    std::vector<VolumeTensor> labels_;
    index_t num_classes_;
};

}  // namespace gsconv
