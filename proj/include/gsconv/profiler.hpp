#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "gsconv/network.hpp"

namespace gsconv {

// Costing conventions (also emitted in every report header):
//   - 1 multiply-accumulate = 2 FLOPs
//   - conv FLOPs = 2 * D*H*W * C_in * C_out * kernel_volume per sample
//   - norm and activation: 1 FLOP per element per pass
//   - pooling / upsampling: 1 FLOP per output element
//   - group shift: 0 FLOPs; its data movement is reported as moved bytes
//     (elements read + written, 8 bytes each)
struct CostRow {
    std::string name;
    std::string kind;
    index_t params{0};
    index_t flops{0};
    index_t moved_bytes{0};
};

CostRow cost_of(const std::string& name, const Layer& layer, const Shape5& in_dims,
                index_t batch = 1);

std::vector<CostRow> profile_network(const Network& net, index_t batch = 1);

index_t count_params(const Network& net);
index_t count_flops(const Network& net, index_t batch = 1);

void write_cost_csv(std::ostream& os, const std::vector<CostRow>& rows);

// Side-by-side pointwise vs conv3 costing of one network spec; writes a CSV
// and an aligned text table. weight_ratio is the bias-free weight-count
// ratio, exactly 27 for conv rows.
void compare_report(const NetworkSpec& spec, const Shape5& input_dims, std::ostream& csv_os,
                    std::ostream& text_os);

}  // namespace gsconv
