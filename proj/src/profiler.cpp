#include "gsconv/profiler.hpp"

#include <iomanip>

namespace gsconv {

namespace {

constexpr char kConventionNote[] =
    "# conventions: 1 MAC = 2 FLOPs; conv FLOPs = 2*D*H*W*Cin*Cout*kernel_volume per sample; "
    "norm/activation 1 FLOP per element; pool/upsample 1 FLOP per output element; "
    "group shift 0 FLOPs with moved bytes = 16 per element";

}  // namespace

CostRow cost_of(const std::string& name, const Layer& layer, const Shape5& in_dims,
                index_t batch) {
    const LayerInfo info = layer.info();
    const Shape5 out = layer.out_dims(in_dims);
    const index_t voxels = batch * in_dims.spatial();
    const index_t out_elems = batch * out.spatial() * out.c;

    CostRow row;
    row.name = name;
    row.kind = layer_kind_name(info.kind);
    switch (info.kind) {
        case LayerKind::Pointwise:
        case LayerKind::Conv3:
            row.params = info.kernel_volume * info.c_in * info.c_out + info.c_out;
            row.flops = 2 * voxels * info.c_in * info.c_out * info.kernel_volume;
            break;
        case LayerKind::Norm:
            row.params = 2 * info.c_out;
            row.flops = out_elems;
            break;
        case LayerKind::Relu:
            row.flops = out_elems;
            break;
        case LayerKind::AvgPool:
        case LayerKind::Upsample:
            row.flops = out_elems;
            break;
        case LayerKind::GroupShift:
            row.flops = 0;
            row.moved_bytes = 2 * static_cast<index_t>(sizeof(double)) * out_elems;
            break;
    }
    return row;
}

std::vector<CostRow> profile_network(const Network& net, index_t batch) {
    std::vector<CostRow> rows;
    net.visit_layers([&rows, batch](const std::string& name, const Layer& layer,
                                    const Shape5& in_dims) {
        rows.push_back(cost_of(name, layer, in_dims, batch));
    });
    return rows;
}

index_t count_params(const Network& net) {
    index_t total = 0;
    for (const CostRow& row : profile_network(net)) total += row.params;
    return total;
}

index_t count_flops(const Network& net, index_t batch) {
    index_t total = 0;
    for (const CostRow& row : profile_network(net, batch)) total += row.flops;
    return total;
}

void write_cost_csv(std::ostream& os, const std::vector<CostRow>& rows) {
    os << kConventionNote << '\n';
    os << "layer,kind,params,flops,moved_bytes\n";
    index_t params = 0, flops = 0, moved = 0;
    for (const CostRow& row : rows) {
        os << row.name << ',' << row.kind << ',' << row.params << ',' << row.flops << ','
           << row.moved_bytes << '\n';
        params += row.params;
        flops += row.flops;
        moved += row.moved_bytes;
    }
    os << "total,," << params << ',' << flops << ',' << moved << '\n';
}

void compare_report(const NetworkSpec& spec, const Shape5& input_dims, std::ostream& csv_os,
                    std::ostream& text_os) {
    NetworkSpec pw = spec;
    NetworkSpec c3 = spec;
    for (auto& st : pw.stages) st.conv = ConvKind::Pointwise;
    for (auto& st : c3.stages) st.conv = ConvKind::Conv3;

    const Network net_pw(pw, input_dims);
    const Network net_c3(c3, input_dims);
    const index_t batch = input_dims.n;
    const std::vector<CostRow> rows_pw = profile_network(net_pw, batch);
    const std::vector<CostRow> rows_c3 = profile_network(net_c3, batch);
    if (rows_pw.size() != rows_c3.size())
        throw StateError("pointwise and conv3 variants produced different layer counts");

    csv_os << kConventionNote << '\n';
    csv_os << "layer,kind,params_pointwise,params_conv3,weight_ratio,flops_pointwise,"
              "flops_conv3,flop_ratio\n";
    text_os << kConventionNote << '\n';
    text_os << std::left << std::setw(18) << "layer" << std::setw(12) << "kind" << std::right
            << std::setw(12) << "params_pw" << std::setw(12) << "params_c3" << std::setw(8)
            << "w_ratio" << std::setw(16) << "flops_pw" << std::setw(16) << "flops_c3"
            << std::setw(8) << "f_ratio" << '\n';

    index_t tp_pw = 0, tp_c3 = 0, tf_pw = 0, tf_c3 = 0;
    for (std::size_t i = 0; i < rows_pw.size(); ++i) {
        const CostRow& a = rows_pw[i];
        const CostRow& b = rows_c3[i];
        const bool conv_row = a.kind == "pointwise" || a.kind == "conv3";
        const double w_ratio = conv_row ? 27.0 : 1.0;  // bias-free weight counts
        const double f_ratio =
            a.flops > 0 ? static_cast<double>(b.flops) / static_cast<double>(a.flops) : 1.0;
        csv_os << a.name << ',' << (conv_row ? "conv" : a.kind) << ',' << a.params << ','
               << b.params << ',' << w_ratio << ',' << a.flops << ',' << b.flops << ','
               << f_ratio << '\n';
        text_os << std::left << std::setw(18) << a.name << std::setw(12)
                << (conv_row ? "conv" : a.kind) << std::right << std::setw(12) << a.params
                << std::setw(12) << b.params << std::setw(8) << w_ratio << std::setw(16)
                << a.flops << std::setw(16) << b.flops << std::setw(8) << std::fixed
                << std::setprecision(1) << f_ratio << '\n';
        text_os << std::defaultfloat << std::setprecision(6);
        tp_pw += a.params;
        tp_c3 += b.params;
        tf_pw += a.flops;
        tf_c3 += b.flops;
    }
    csv_os << "total,," << tp_pw << ',' << tp_c3 << ",," << tf_pw << ',' << tf_c3 << ','
           << static_cast<double>(tf_c3) / static_cast<double>(tf_pw) << '\n';
    text_os << std::left << std::setw(18) << "total" << std::setw(12) << "" << std::right
            << std::setw(12) << tp_pw << std::setw(12) << tp_c3 << std::setw(8) << ""
            << std::setw(16) << tf_pw << std::setw(16) << tf_c3 << std::setw(8) << std::fixed
            << std::setprecision(1)
            << static_cast<double>(tf_c3) / static_cast<double>(tf_pw) << '\n';
    text_os << std::defaultfloat << std::setprecision(6);
}

}  // namespace gsconv
