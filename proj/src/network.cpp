#include "gsconv/network.hpp"

#include <algorithm>
#include <cctype>

namespace gsconv {

std::string to_string(ConvKind kind) {
    return kind == ConvKind::Pointwise ? "pointwise" : "conv3";
}

std::string to_string(GsInsert insert) {
    switch (insert) {
        case GsInsert::None: return "none";
        case GsInsert::CSC: return "csc";
        case GsInsert::CCS: return "ccs";
        case GsInsert::CSCS: return "cscs";
        case GsInsert::CSCSUpShift: return "cscs_upshift";
    }
    return "none";
}

std::string to_string(GsPlacement placement) {
    switch (placement) {
        case GsPlacement::Encoder: return "encoder";
        case GsPlacement::Decoder: return "decoder";
        case GsPlacement::Both: return "both";
    }
    return "both";
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

ConvKind conv_kind_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "pointwise") return ConvKind::Pointwise;
    if (v == "conv3") return ConvKind::Conv3;
    throw ConfigError("unknown conv kind '" + s + "' (expected pointwise|conv3)");
}

GsInsert gs_insert_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "none") return GsInsert::None;
    if (v == "csc") return GsInsert::CSC;
    if (v == "ccs") return GsInsert::CCS;
    if (v == "cscs") return GsInsert::CSCS;
    if (v == "cscs_upshift" || v == "cscsupshift") return GsInsert::CSCSUpShift;
    throw ConfigError("unknown insert position '" + s +
                      "' (expected none|csc|ccs|cscs|cscs_upshift)");
}

GsPlacement gs_placement_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "encoder") return GsPlacement::Encoder;
    if (v == "decoder") return GsPlacement::Decoder;
    if (v == "both") return GsPlacement::Both;
    throw ConfigError("unknown placement '" + s + "' (expected encoder|decoder|both)");
}

void NetworkSpec::validate() const {
    if (stages.size() != 5)
        throw ConfigError("network spec needs exactly 5 stages, got " +
                          std::to_string(stages.size()));
    if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (shift_fraction < 0.0 || shift_fraction > 1.0)
        throw ConfigError("shift_fraction must be in [0, 1]");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const StageSpec& st = stages[i];
        if (st.channels < 1)
            throw ConfigError("stage " + std::to_string(i + 1) + ": channels must be >= 1");
        if (st.groups[0] < 1 || st.groups[1] < 1 || st.groups[2] < 1)
            throw ConfigError("stage " + std::to_string(i + 1) + ": group counts must be >= 1");
    }
}

nlohmann::json NetworkSpec::to_json() const {
    nlohmann::json j;
    j["in_channels"] = in_channels;
    j["num_classes"] = num_classes;
    j["stages"] = nlohmann::json::array();
    for (const StageSpec& st : stages) {
        nlohmann::json js;
        js["channels"] = st.channels;
        js["groups"] = {st.groups[0], st.groups[1], st.groups[2]};
        js["conv"] = to_string(st.conv);
        j["stages"].push_back(js);
    }
    j["insert"] = to_string(insert);
    j["placement"] = to_string(placement);
    j["shift_fraction"] = shift_fraction;
    return j;
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    try {
        spec.in_channels = j.at("in_channels").get<index_t>();
        spec.num_classes = j.at("num_classes").get<index_t>();
        for (const auto& js : j.at("stages")) {
            StageSpec st;
            st.channels = js.at("channels").get<index_t>();
            const auto& g = js.at("groups");
            if (g.size() != 3) throw ConfigError("stage groups must have 3 entries");
            st.groups = {g[0].get<index_t>(), g[1].get<index_t>(), g[2].get<index_t>()};
            st.conv = conv_kind_from_string(js.at("conv").get<std::string>());
            spec.stages.push_back(st);
        }
        spec.insert = gs_insert_from_string(j.at("insert").get<std::string>());
        spec.placement = gs_placement_from_string(j.at("placement").get<std::string>());
        spec.shift_fraction = j.at("shift_fraction").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad network spec JSON: ") + e.what());
    }
    return spec;
}

std::array<std::array<index_t, 3>, 5> preset_spatial_groups(const std::string& name) {
    const std::string v = lower(name);
    if (v == "prosgv1")
        return {{{2, 2, 2}, {2, 2, 2}, {2, 4, 4}, {1, 8, 8}, {1, 8, 8}}};
    if (v == "prosgv2")
        return {{{1, 2, 2}, {1, 4, 4}, {2, 4, 4}, {1, 8, 8}, {1, 8, 8}}};
    if (v == "prosgv3")
        return {{{2, 2, 2}, {1, 4, 4}, {1, 4, 4}, {1, 8, 8}, {1, 8, 8}}};
    if (v == "prosgv4")
        return {{{1, 2, 2}, {2, 2, 2}, {2, 4, 4}, {1, 8, 8}, {1, 8, 8}}};
    if (v == "brats" || v == "bratsv1")
        return {{{2, 2, 2}, {2, 2, 2}, {2, 2, 2}, {4, 4, 4}, {5, 5, 5}}};
    throw ConfigError("unknown spatial-group preset '" + name +
                      "' (expected prosgv1..prosgv4|brats)");
}

std::vector<std::array<index_t, 3>> auto_spatial_groups(const Shape5& input_dims,
                                                        std::size_t stage_count) {
    std::vector<std::array<index_t, 3>> out;
    index_t d = input_dims.d, h = input_dims.h, w = input_dims.w;
    for (std::size_t s = 0; s < stage_count; ++s) {
        out.push_back({d % 2 == 0 ? 2 : 1, h % 2 == 0 ? 2 : 1, w % 2 == 0 ? 2 : 1});
        if (s + 1 < stage_count) {
            d /= 2;
            h /= 2;
            w /= 2;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(const NetworkSpec& spec, const Shape5& input_dims)
    : Network(spec, input_dims, true) {}

Network Network::make(std::vector<StageSpec> stages, index_t in_channels, index_t num_classes,
                      GsInsert insert, GsPlacement placement, double shift_fraction,
                      const Shape5& input_dims) {
    NetworkSpec spec;
    spec.in_channels = in_channels;
    spec.num_classes = num_classes;
    spec.stages = std::move(stages);
    spec.insert = insert;
    spec.placement = placement;
    spec.shift_fraction = shift_fraction;
    return Network(std::move(spec), input_dims, false);
}

Network::Network(NetworkSpec spec, const Shape5& input_dims, bool require_five)
    : spec_(std::move(spec)), input_dims_(input_dims) {
    if (require_five) spec_.validate();
    if (spec_.stages.size() < 2) throw ConfigError("network needs at least 2 stages");
    input_dims_.n = 1;
    input_dims_.c = spec_.in_channels;
    input_dims_.validate();

    const index_t factor = index_t{1} << (spec_.stages.size() - 1);
    if (input_dims_.d % factor != 0 || input_dims_.h % factor != 0 || input_dims_.w % factor != 0)
        throw ConfigError("input spatial dims " + input_dims_.str() + " must be divisible by " +
                          std::to_string(factor) + " (" +
                          std::to_string(spec_.stages.size() - 1) + " poolings)");
    build();
}

Shape5 Network::stage_dims(std::size_t stage) const {
    Shape5 dm = input_dims_;
    dm.d >>= stage;
    dm.h >>= stage;
    dm.w >>= stage;
    return dm;
}

Network::TablePair Network::tables_for(const GroupShiftConfig& cfg, const Shape5& dims) {
    const TableKey key{dims.d,  dims.h,  dims.w,  dims.c,
                       cfg.g_d, cfg.g_h, cfg.g_w, cfg.channels_per_group,
                       cfg.shifted_channels};
    auto it = table_cache_.find(key);
    if (it != table_cache_.end()) return it->second;
    auto fwd = std::make_shared<PermutationTable>(build_permutation(cfg, dims));
    auto inv = std::make_shared<PermutationTable>(invert_permutation(*fwd));
    TablePair pair{std::move(fwd), std::move(inv)};
    table_cache_.emplace(key, pair);
    return pair;
}

std::unique_ptr<GroupShiftLayer> Network::make_gs(const std::string& name, std::size_t stage,
                                                  index_t channels) {
    const auto& g = spec_.stages[stage].groups;
    GroupShiftConfig cfg;
    try {
        cfg = GroupShiftConfig::from_fraction(g[0], g[1], g[2], channels, spec_.shift_fraction);
        if (cfg.group_count() > 1 && spec_.shift_fraction > 0.0 && cfg.channels_per_group < 1)
            throw ConfigError("channels per group rounds to 0 (C=" + std::to_string(channels) +
                              ", G=" + std::to_string(cfg.group_count()) + ")");
        Shape5 dims = stage_dims(stage);
        dims.c = channels;
        cfg.bind(dims);
        auto pair = tables_for(cfg, dims);
        auto layer = std::make_unique<GroupShiftLayer>(pair.fwd, pair.inv, cfg);
        layer->set_name(name);
        return layer;
    } catch (const ConfigError& e) {
        throw ConfigError("stage " + std::to_string(stage + 1) + " (" + name + "): " + e.what());
    }
}

LayerStack Network::make_block(const std::string& prefix, std::size_t stage, index_t c_in,
                               index_t c_out, bool gs_active) {
    const ConvKind kind = spec_.stages[stage].conv;
    const GsInsert insert = spec_.insert;
    LayerStack block;

    auto add_conv = [&](const std::string& tag, index_t ci, index_t co) {
        if (kind == ConvKind::Pointwise)
            block.emplace<PointwiseConv>(ci, co).set_name(prefix + "." + tag);
        else
            block.emplace<Conv3>(ci, co).set_name(prefix + "." + tag);
        block.emplace<InstanceNorm>(co).set_name(prefix + ".norm" + tag.substr(4));
        block.emplace<ReluLayer>(co).set_name(prefix + ".relu" + tag.substr(4));
    };

    add_conv("conv1", c_in, c_out);
    if (gs_active &&
        (insert == GsInsert::CSC || insert == GsInsert::CSCS || insert == GsInsert::CSCSUpShift))
        block.push(make_gs(prefix + ".gs1", stage, c_out));
    add_conv("conv2", c_out, c_out);
    if (gs_active &&
        (insert == GsInsert::CCS || insert == GsInsert::CSCS || insert == GsInsert::CSCSUpShift))
        block.push(make_gs(prefix + ".gs2", stage, c_out));
    return block;
}

void Network::build() {
    const std::size_t s_count = spec_.stages.size();
    const bool gs_any = spec_.insert != GsInsert::None;
    const bool gs_enc = gs_any && (spec_.placement == GsPlacement::Encoder ||
                                   spec_.placement == GsPlacement::Both);
    const bool gs_dec = gs_any && (spec_.placement == GsPlacement::Decoder ||
                                   spec_.placement == GsPlacement::Both);

    index_t prev_c = spec_.in_channels;
    for (std::size_t i = 0; i < s_count; ++i) {
        const index_t ch = spec_.stages[i].channels;
        // The bottleneck block carries no shift; its feature map after the
        // last pooling is too coarse to host the deeper presets.
        const bool active = gs_enc && i + 1 < s_count;
        enc_.push_back(make_block("enc" + std::to_string(i + 1), i, prev_c, ch, active));
        if (i + 1 < s_count) {
            auto pool = std::make_unique<AvgPool2>(ch);
            pool->set_name("pool" + std::to_string(i + 1));
            pools_.push_back(std::move(pool));
        }
        prev_c = ch;
    }

    dec_.resize(s_count - 1);
    ups_.resize(s_count - 1);
    upshift_.resize(s_count - 1);
    for (std::size_t i = s_count - 1; i-- > 0;) {
        const index_t ch = spec_.stages[i].channels;
        const index_t ch_up = spec_.stages[i + 1].channels;
        ups_[i] = std::make_unique<Upsample2>(ch_up);
        ups_[i]->set_name("up" + std::to_string(i + 1));
        if (gs_dec && spec_.insert == GsInsert::CSCSUpShift)
            upshift_[i] = make_gs("upshift" + std::to_string(i + 1), i, ch_up);
        dec_[i] = make_block("dec" + std::to_string(i + 1), i, ch + ch_up, ch, gs_dec);
    }

    head_ = std::make_unique<PointwiseConv>(spec_.stages[0].channels, spec_.num_classes);
    head_->set_name("head");
}

void Network::init_params(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& block : enc_) block.init_params(rng);
    for (std::size_t i = dec_.size(); i-- > 0;) dec_[i].init_params(rng);
    head_->init_params(rng);
}

VolumeTensor Network::forward(const VolumeTensor& input, bool retain) {
    const Shape5& dm = input.dims();
    if (dm.d != input_dims_.d || dm.h != input_dims_.h || dm.w != input_dims_.w ||
        dm.c != input_dims_.c)
        throw ShapeError("network built for per-sample dims " + input_dims_.str() + ", got " +
                         dm.str());

    const std::size_t s_count = enc_.size();
    std::vector<VolumeTensor> skips(s_count - 1);
    VolumeTensor cur = input;
    for (std::size_t i = 0; i < s_count; ++i) {
        if (i > 0) cur = pools_[i - 1]->forward(cur, retain);
        cur = enc_[i].forward(cur, retain);
        if (i + 1 < s_count) skips[i] = cur;
    }
    for (std::size_t i = s_count - 1; i-- > 0;) {
        VolumeTensor up = ups_[i]->forward(cur, retain);
        if (upshift_[i]) up = upshift_[i]->forward(up, retain);
        cur = dec_[i].forward(concat_channels(skips[i], up), retain);
        skips[i] = VolumeTensor();  // release
    }
    VolumeTensor logits = head_->forward(cur, retain);
    has_forward_state_ = retain;
    return logits;
}

VolumeTensor Network::backward(const VolumeTensor& grad_logits) {
    if (!has_forward_state_)
        throw StateError("network backward called without a retained forward pass");

    const std::size_t s_count = enc_.size();
    VolumeTensor g = head_->backward(grad_logits);
    std::vector<VolumeTensor> skip_grads(s_count - 1);
    for (std::size_t i = 0; i < s_count - 1; ++i) {
        VolumeTensor gcat = dec_[i].backward(g);
        VolumeTensor gskip, gup;
        split_channels(gcat, spec_.stages[i].channels, gskip, gup);
        skip_grads[i] = std::move(gskip);
        if (upshift_[i]) gup = upshift_[i]->backward(gup);
        g = ups_[i]->backward(gup);
    }
    for (std::size_t i = s_count; i-- > 0;) {
        VolumeTensor gin = enc_[i].backward(g);
        if (i > 0) {
            g = pools_[i - 1]->backward(gin);
            add_inplace(g, skip_grads[i - 1]);
        } else {
            g = std::move(gin);
        }
    }
    has_forward_state_ = false;
    return g;
}

std::vector<ParamBlock*> Network::params() {
    std::vector<ParamBlock*> out;
    for (auto& block : enc_)
        for (ParamBlock* p : block.params()) out.push_back(p);
    for (std::size_t i = dec_.size(); i-- > 0;)
        for (ParamBlock* p : dec_[i].params()) out.push_back(p);
    for (ParamBlock* p : head_->params()) out.push_back(p);
    return out;
}

std::vector<std::pair<std::string, ParamBlock*>> Network::named_params() {
    std::vector<std::pair<std::string, ParamBlock*>> out;
    auto add_stack = [&out](LayerStack& stack) {
        for (std::size_t i = 0; i < stack.size(); ++i)
            for (ParamBlock* p : stack[i].params())
                out.emplace_back(stack[i].name() + "." + p->name, p);
    };
    for (auto& block : enc_) add_stack(block);
    for (std::size_t i = dec_.size(); i-- > 0;) add_stack(dec_[i]);
    for (ParamBlock* p : head_->params()) out.emplace_back(head_->name() + "." + p->name, p);
    return out;
}

void Network::zero_grads() { gsconv::zero_grads(params()); }

void Network::visit_layers(
    const std::function<void(const std::string&, const Layer&, const Shape5&)>& fn) const {
    const std::size_t s_count = enc_.size();
    std::vector<Shape5> skip_dims(s_count - 1);

    auto walk_stack = [&fn](const LayerStack& stack, Shape5 dims) {
        for (std::size_t i = 0; i < stack.size(); ++i) {
            fn(stack[i].name(), stack[i], dims);
            dims = stack[i].out_dims(dims);
        }
        return dims;
    };

    Shape5 dims = input_dims_;
    for (std::size_t i = 0; i < s_count; ++i) {
        if (i > 0) {
            fn(pools_[i - 1]->name(), *pools_[i - 1], dims);
            dims = pools_[i - 1]->out_dims(dims);
        }
        dims = walk_stack(enc_[i], dims);
        if (i + 1 < s_count) skip_dims[i] = dims;
    }
    for (std::size_t i = s_count - 1; i-- > 0;) {
        fn(ups_[i]->name(), *ups_[i], dims);
        dims = ups_[i]->out_dims(dims);
        if (upshift_[i]) fn(upshift_[i]->name(), *upshift_[i], dims);
        Shape5 cat = dims;
        cat.c += skip_dims[i].c;
        dims = walk_stack(dec_[i], cat);
    }
    fn(head_->name(), *head_, dims);
}

}  // namespace gsconv
