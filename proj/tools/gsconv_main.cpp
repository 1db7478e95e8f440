#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gsconv/group_shift.hpp"
#include "gsconv/io.hpp"
#include "gsconv/network.hpp"
#include "gsconv/profiler.hpp"
#include "gsconv/rng.hpp"
#include "gsconv/synth.hpp"
#include "gsconv/training.hpp"

namespace fs = std::filesystem;
using namespace gsconv;

namespace {

constexpr const char* kVersion = "0.1.0";

std::vector<index_t> parse_int_list(const std::string& text, std::size_t expected,
                                    const std::string& what) {
    std::vector<index_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoll(item));
        } catch (const std::exception&) {
            throw ConfigError(what + ": cannot parse '" + item + "' as an integer");
        }
    }
    if (out.size() != expected)
        throw ConfigError(what + ": expected " + std::to_string(expected) + " comma-separated "
                          "integers, got " + std::to_string(out.size()));
    return out;
}

void set_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

std::string sample_name(const char* prefix, index_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05lld.gsv", prefix, static_cast<long long>(i));
    return buf;
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
    std::string task{"longrange"};
    std::string dims{"32,32,16"};
    index_t count{100};
    index_t classes{3};
    std::uint64_t seed{0};
    std::string out;
    std::string dtype{"f32"};
};

int cmd_gen(const GenArgs& args) {
    const auto dims = parse_int_list(args.dims, 3, "--dims");
    TaskSpec spec;
    spec.kind = task_kind_from_string(args.task);
    spec.d = dims[0];
    spec.h = dims[1];
    spec.w = dims[2];
    spec.num_classes = args.classes;
    spec.seed = args.seed;
    spec.count = args.count;
    spec.validate();

    const GsvDtype dtype = args.dtype == "f64" ? GsvDtype::F64 : GsvDtype::F32;
    fs::create_directories(args.out);
    for (index_t i = 0; i < spec.count; ++i) {
        Sample s = gen_sample(spec, i);
        write_gsv((fs::path(args.out) / sample_name("vol", i)).string(), s.volume, dtype);
        write_gsv((fs::path(args.out) / sample_name("lbl", i)).string(), s.label, dtype);
    }

    nlohmann::json manifest;
    manifest["tool_version"] = kVersion;
    manifest["task"] = to_string(spec.kind);
    manifest["dims"] = {spec.d, spec.h, spec.w};
    manifest["num_classes"] = spec.num_classes;
    manifest["seed"] = spec.seed;
    manifest["count"] = spec.count;
    manifest["dtype"] = args.dtype;
    std::ofstream mf(fs::path(args.out) / "manifest.json");
    mf << manifest.dump(2) << '\n';
    if (!mf) throw IoError("cannot write manifest to " + args.out);

    std::cout << "gen: wrote " << spec.count << " " << to_string(spec.kind) << " samples to "
              << args.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// dataset loading

MemoryDataset load_dataset_dir(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("missing manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(dir + "/manifest.json: " + e.what());
    }
    const auto count = manifest.at("count").get<index_t>();
    const auto num_classes = manifest.at("num_classes").get<index_t>();
    std::vector<VolumeTensor> volumes, labels;
    volumes.reserve(static_cast<std::size_t>(count));
    labels.reserve(static_cast<std::size_t>(count));
    for (index_t i = 0; i < count; ++i) {
        volumes.push_back(read_gsv((fs::path(dir) / sample_name("vol", i)).string()));
        labels.push_back(read_gsv((fs::path(dir) / sample_name("lbl", i)).string()));
    }
    return MemoryDataset(std::move(volumes), std::move(labels), num_classes);
}

// ---------------------------------------------------------------------------
// spec assembly

struct SpecArgs {
    std::string spec_path;
    std::string preset;
    std::string insert{"none"};
    std::string placement{"both"};
    double shift_fraction{0.5};
    std::string conv{"pointwise"};
    std::string channels;
    index_t in_channels{1};
    index_t classes{3};

    bool insert_set{false}, placement_set{false}, fraction_set{false}, conv_set{false},
        channels_set{false}, in_set{false}, classes_set{false};
};

void add_spec_options(CLI::App* cmd, SpecArgs& args) {
    cmd->add_option("--spec", args.spec_path, "network spec JSON file");
    cmd->add_option("--preset", args.preset,
                    "spatial-group preset: prosgv1..prosgv4|brats (default: derived from input "
                    "size)");
    cmd->add_option("--insert", args.insert, "shift insert position: none|csc|ccs|cscs|cscs_upshift")
        ->each([&args](const std::string&) { args.insert_set = true; });
    cmd->add_option("--placement", args.placement, "shift placement: encoder|decoder|both")
        ->each([&args](const std::string&) { args.placement_set = true; });
    cmd->add_option("--shift-fraction", args.shift_fraction, "fraction of channels shifted")
        ->each([&args](const std::string&) { args.fraction_set = true; });
    cmd->add_option("--conv", args.conv, "convolution kind: pointwise|conv3")
        ->each([&args](const std::string&) { args.conv_set = true; });
    cmd->add_option("--channels", args.channels, "per-stage channels, 5 comma-separated values")
        ->each([&args](const std::string&) { args.channels_set = true; });
    cmd->add_option("--in-channels", args.in_channels, "input channels")
        ->each([&args](const std::string&) { args.in_set = true; });
    cmd->add_option("--classes", args.classes, "number of classes")
        ->each([&args](const std::string&) { args.classes_set = true; });
}

// Precedence: CLI flag > spec file > default.
NetworkSpec build_spec(const SpecArgs& args, const Shape5& input_dims, index_t data_in_channels,
                       index_t data_classes) {
    NetworkSpec spec;
    if (!args.spec_path.empty()) {
        std::ifstream in(args.spec_path);
        if (!in) throw IoError("cannot open spec file " + args.spec_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IoError(args.spec_path + ": " + e.what());
        }
        spec = NetworkSpec::from_json(j);
    } else {
        spec.in_channels = data_in_channels;
        spec.num_classes = data_classes;
        for (std::size_t s = 0; s < 5; ++s) {
            StageSpec st;
            st.channels = kDefaultStageChannels[s];
            spec.stages.push_back(st);
        }
        if (!args.preset.empty()) {
            const auto groups = preset_spatial_groups(args.preset);
            for (std::size_t s = 0; s < 5; ++s) spec.stages[s].groups = groups[s];
        } else {
            const auto groups = auto_spatial_groups(input_dims, 5);
            for (std::size_t s = 0; s < 5; ++s) spec.stages[s].groups = groups[s];
        }
    }
    if (!args.spec_path.empty() && !args.preset.empty()) {
        const auto groups = preset_spatial_groups(args.preset);
        for (std::size_t s = 0; s < 5 && s < spec.stages.size(); ++s)
            spec.stages[s].groups = groups[s];
    }
    if (args.insert_set) spec.insert = gs_insert_from_string(args.insert);
    if (args.placement_set) spec.placement = gs_placement_from_string(args.placement);
    if (args.fraction_set) spec.shift_fraction = args.shift_fraction;
    if (args.conv_set)
        for (auto& st : spec.stages) st.conv = conv_kind_from_string(args.conv);
    if (args.channels_set) {
        const auto ch = parse_int_list(args.channels, 5, "--channels");
        for (std::size_t s = 0; s < 5; ++s) spec.stages[s].channels = ch[s];
    }
    if (args.in_set) spec.in_channels = args.in_channels;
    if (args.classes_set) spec.num_classes = args.classes;
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// train / eval

struct TrainArgs {
    SpecArgs spec;
    std::string data;
    std::string task{"longrange"};
    std::string dims{"32,32,16"};
    index_t count{200};
    index_t eval_count{50};
    index_t iters{500};
    index_t batch{4};
    double lr{0.01};
    double power{0.9};
    double momentum{0.9};
    std::uint64_t seed{0};
    index_t metrics_interval{50};
    std::string out{"run"};
};

int cmd_train(const TrainArgs& args) {
    std::unique_ptr<Dataset> train_data;
    std::unique_ptr<Dataset> eval_data;
    if (!args.data.empty()) {
        train_data = std::make_unique<MemoryDataset>(load_dataset_dir(args.data));
    } else {
        const auto dims = parse_int_list(args.dims, 3, "--dims");
        TaskSpec task;
        task.kind = task_kind_from_string(args.task);
        task.d = dims[0];
        task.h = dims[1];
        task.w = dims[2];
        task.seed = args.seed;
        task.count = args.count + args.eval_count;
        train_data = std::make_unique<SynthDataset>(task, 0, args.count);
        if (args.eval_count > 0)
            eval_data = std::make_unique<SynthDataset>(task, args.count, args.eval_count);
    }

    const Shape5& vol_dims = train_data->volume(0).dims();
    const NetworkSpec spec =
        build_spec(args.spec, vol_dims, vol_dims.c, train_data->num_classes());

    Network net(spec, vol_dims);
    net.init_params(args.seed);

    TrainConfig cfg;
    cfg.base_lr = args.lr;
    cfg.power = args.power;
    cfg.momentum = args.momentum;
    cfg.max_iters = args.iters;
    cfg.batch_size = args.batch;
    cfg.seed = args.seed;
    cfg.metrics_interval = args.metrics_interval;

    fs::create_directories(args.out);
    std::ofstream csv(fs::path(args.out) / "metrics.csv");
    if (!csv) throw IoError("cannot write metrics.csv in " + args.out);

    nlohmann::json manifest;
    manifest["tool_version"] = kVersion;
    manifest["command"] = "train";
    manifest["spec"] = spec.to_json();
    manifest["seed"] = args.seed;
    manifest["iters"] = cfg.max_iters;
    manifest["batch"] = cfg.batch_size;
    manifest["base_lr"] = cfg.base_lr;
    manifest["power"] = cfg.power;
    manifest["momentum"] = cfg.momentum;
    if (!args.data.empty()) {
        manifest["data"] = args.data;
    } else {
        manifest["task"] = args.task;
        manifest["dims"] = args.dims;
        manifest["count"] = args.count;
        manifest["eval_count"] = args.eval_count;
    }
    std::ofstream mf(fs::path(args.out) / "manifest.json");
    mf << manifest.dump(2) << '\n';

    train(net, *train_data, cfg, &csv, [](const MetricsRow& row) {
        std::cout << "iter " << row.iteration << " loss " << row.loss << " mDice " << row.mdice
                  << " lr " << row.lr << '\n';
    });
    save_checkpoint((fs::path(args.out) / "checkpoint.gsc").string(), net);

    if (eval_data) {
        const EvalResult result = evaluate(net, *eval_data);
        std::cout << "eval:";
        for (std::size_t k = 0; k < result.per_class.size(); ++k)
            std::cout << " dice_class" << k + 1 << " " << result.per_class[k];
        std::cout << " mDice " << result.mdice << '\n';
    }
    std::cout << "train: wrote metrics.csv and checkpoint.gsc to " << args.out << '\n';
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string task{"longrange"};
    std::string dims{"32,32,16"};
    index_t count{50};
    index_t first_index{0};
    std::uint64_t seed{0};
};

int cmd_eval(const EvalArgs& args) {
    std::unique_ptr<Dataset> data;
    if (!args.data.empty()) {
        data = std::make_unique<MemoryDataset>(load_dataset_dir(args.data));
    } else {
        const auto dims = parse_int_list(args.dims, 3, "--dims");
        TaskSpec task;
        task.kind = task_kind_from_string(args.task);
        task.d = dims[0];
        task.h = dims[1];
        task.w = dims[2];
        task.seed = args.seed;
        task.count = args.first_index + args.count;
        data = std::make_unique<SynthDataset>(task, args.first_index, args.count);
    }
    Network net = load_checkpoint(args.checkpoint, data->volume(0).dims());
    const EvalResult result = evaluate(net, *data);
    for (std::size_t k = 0; k < result.per_class.size(); ++k)
        std::cout << "dice_class" << k + 1 << " " << result.per_class[k] << '\n';
    std::cout << "mDice " << result.mdice << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// profile

struct ProfileArgs {
    SpecArgs spec;
    std::string input{"1,16,128,128,1"};
    std::string baseline;
    std::string out;
};

int cmd_profile(const ProfileArgs& args) {
    const auto in = parse_int_list(args.input, 5, "--input");
    const Shape5 input_dims{in[0], in[1], in[2], in[3], in[4]};
    const NetworkSpec spec = build_spec(args.spec, input_dims, input_dims.c, 3);

    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!args.out.empty()) {
        file.open(args.out);
        if (!file) throw IoError("cannot open " + args.out + " for writing");
        os = &file;
    }

    if (!args.baseline.empty()) {
        if (args.baseline != "conv3")
            throw ConfigError("only --baseline conv3 is supported");
        std::ostringstream text;
        compare_report(spec, input_dims, *os, text);
        std::cerr << text.str();
        return 0;
    }
    const Network net(spec, input_dims);
    write_cost_csv(*os, profile_network(net, input_dims.n));
    return 0;
}

// ---------------------------------------------------------------------------
// verify-gs

bool verify_gs_config(const Shape5& dims, const GroupShiftConfig& cfg, bool corrupt,
                      std::string& why) {
    cfg.bind(dims);
    Rng rng(7);
    VolumeTensor f(dims);
    for (index_t i = 0; i < f.size(); ++i) f[i] = rng.normal();

    PermutationTable table = build_permutation(cfg, dims);
    if (corrupt && table.map.size() >= 2) std::swap(table.map[0], table.map[1]);

    // Bijectivity.
    std::vector<bool> seen(table.map.size(), false);
    for (const index_t src : table.map) {
        if (src < 0 || src >= static_cast<index_t>(table.map.size()) ||
            seen[static_cast<std::size_t>(src)]) {
            why = "table is not a bijection";
            return false;
        }
        seen[static_cast<std::size_t>(src)] = true;
    }

    // Oracle equivalence, bit for bit.
    const VolumeTensor naive = apply_group_shift_naive(f, cfg);
    const VolumeTensor fast = apply_permutation(f, table);
    for (index_t i = 0; i < f.size(); ++i)
        if (naive[i] != fast[i]) {
            why = "table path diverges from the reference quadruple loop";
            return false;
        }

    // Inverse round trip.
    const PermutationTable inv = invert_permutation(table);
    const VolumeTensor back = apply_permutation(fast, inv);
    for (index_t i = 0; i < f.size(); ++i)
        if (back[i] != f[i]) {
            why = "inverse application does not restore the input";
            return false;
        }

    // Every destination spatial group sees every origin group once across
    // the shifted channel groups.
    if (cfg.shifted_channels > 0) {
        const index_t g = cfg.group_count();
        const index_t d = dims.d / cfg.g_d, h = dims.h / cfg.g_h, w = dims.w / cfg.g_w;
        VolumeTensor tagged(dims);
        for (index_t x = 0; x < dims.d; ++x)
            for (index_t y = 0; y < dims.h; ++y)
                for (index_t z = 0; z < dims.w; ++z) {
                    const index_t group = x / d + (y / h) * cfg.g_d + (z / w) * cfg.g_d * cfg.g_h;
                    for (index_t c = 0; c < dims.c; ++c)
                        tagged.at(0, x, y, z, c) = static_cast<double>(group);
                }
        const VolumeTensor shifted = apply_permutation(tagged, table);
        for (index_t j = 0; j < g; ++j) {
            const index_t x0 = (j % cfg.g_d) * d;
            const index_t y0 = ((j / cfg.g_d) % cfg.g_h) * h;
            const index_t z0 = (j / (cfg.g_d * cfg.g_h)) * w;
            std::vector<bool> origin_seen(static_cast<std::size_t>(g), false);
            for (index_t k = 0; k < g; ++k) {
                const auto origin = static_cast<index_t>(
                    shifted.at(0, x0, y0, z0, k * cfg.channels_per_group));
                const index_t expect = ((j - k) % g + g) % g;
                if (origin != expect || origin_seen[static_cast<std::size_t>(origin)]) {
                    why = "destination group " + std::to_string(j) +
                          " does not see every origin group exactly once";
                    return false;
                }
                origin_seen[static_cast<std::size_t>(origin)] = true;
            }
        }
    }
    return true;
}

struct VerifyArgs {
    std::string dims;
    std::string groups;
    index_t cg{-1};
    index_t cs{-1};
    bool inject_corruption{false};
};

int cmd_verify_gs(const VerifyArgs& args) {
    int checked = 0;
    std::string why;

    auto run = [&](const Shape5& dims, const GroupShiftConfig& cfg) {
        ++checked;
        if (!verify_gs_config(dims, cfg, args.inject_corruption, why)) {
            std::ostringstream os;
            os << "dims " << dims.str() << " groups (" << cfg.g_d << "," << cfg.g_h << ","
               << cfg.g_w << ") cg " << cfg.channels_per_group << ": " << why;
            throw StateError(os.str());
        }
    };

    if (!args.dims.empty()) {
        const auto d = parse_int_list(args.dims, 5, "--dims");
        const auto g = parse_int_list(args.groups, 3, "--groups");
        if (args.cg < 0 || args.cs < 0)
            throw ConfigError("--cg and --cs are required with --dims");
        GroupShiftConfig cfg;
        cfg.g_d = g[0];
        cfg.g_h = g[1];
        cfg.g_w = g[2];
        cfg.channels_per_group = args.cg;
        cfg.shifted_channels = args.cs;
        cfg.validate();
        run(Shape5{1, d[1], d[2], d[3], d[4]}, cfg);
    } else {
        const std::vector<Shape5> grid = {
            {1, 2, 2, 2, 4}, {1, 4, 4, 4, 8}, {1, 4, 2, 6, 8}, {1, 6, 6, 6, 8}, {1, 8, 4, 4, 16}};
        const std::vector<std::array<index_t, 3>> group_sets = {
            {1, 1, 1}, {2, 1, 1}, {1, 2, 1}, {2, 2, 1}, {2, 2, 2}, {4, 1, 2}, {2, 4, 2}};
        for (const Shape5& dims : grid)
            for (const auto& gs : group_sets) {
                if (dims.d % gs[0] != 0 || dims.h % gs[1] != 0 || dims.w % gs[2] != 0) continue;
                for (const double fraction : {0.0, 0.5, 1.0}) {
                    const GroupShiftConfig cfg =
                        GroupShiftConfig::from_fraction(gs[0], gs[1], gs[2], dims.c, fraction);
                    run(dims, cfg);
                }
            }
    }
    std::cout << "verify-gs: " << checked << " configuration(s) checked, all OK\n";
    return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
    std::string dims{"1,64,64,64,32"};
    std::string groups{"2,2,2"};
    double fraction{0.5};
    int reps{9};
};

int cmd_bench(const BenchArgs& args) {
    const auto d = parse_int_list(args.dims, 5, "--dims");
    const auto g = parse_int_list(args.groups, 3, "--groups");
    const Shape5 dims{d[0], d[1], d[2], d[3], d[4]};
    const GroupShiftConfig cfg =
        GroupShiftConfig::from_fraction(g[0], g[1], g[2], dims.c, args.fraction);
    cfg.bind(dims);

    Rng rng(11);
    VolumeTensor f(dims);
    for (index_t i = 0; i < f.size(); ++i) f[i] = rng.normal();
    const PermutationTable table = build_permutation(cfg, dims);

    auto time_ns = [&](auto&& fn) {
        std::vector<double> ns;
        for (int r = 0; r < args.reps; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            const VolumeTensor out = fn();
            const auto t1 = std::chrono::steady_clock::now();
            if (out.size() != f.size()) throw StateError("bench output size mismatch");
            ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count() /
                         static_cast<double>(f.size()));
        }
        std::sort(ns.begin(), ns.end());
        return ns[ns.size() / 2];
    };

    const VolumeTensor ref = apply_group_shift_naive(f, cfg);
    const VolumeTensor fast = apply_permutation(f, table);
    for (index_t i = 0; i < f.size(); ++i)
        if (ref[i] != fast[i]) throw StateError("bench correctness check failed");

    const double naive_ns = time_ns([&] { return apply_group_shift_naive(f, cfg); });
    const double table_ns = time_ns([&] { return apply_permutation(f, table); });
    std::cout << "bench dims " << dims.str() << " groups (" << cfg.g_d << "," << cfg.g_h << ","
              << cfg.g_w << ") cg " << cfg.channels_per_group << " cs " << cfg.shifted_channels
              << " reps " << args.reps << '\n';
    std::cout << "naive_ns_per_elem " << naive_ns << '\n';
    std::cout << "table_ns_per_elem " << table_ns << '\n';
    std::cout << "speedup " << naive_ns / table_ns << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "gsconv: pointwise 3D segmentation networks with the Group Shift permutation.\n"
        "Config precedence: CLI flag > spec file > built-in default."};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "cap worker threads (0 = library default)");

    GenArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset directory");
    gen->add_option("--task", gen_args.task, "longrange|local");
    gen->add_option("--dims", gen_args.dims, "volume dims D,H,W");
    gen->add_option("--count", gen_args.count, "number of samples");
    gen->add_option("--classes", gen_args.classes, "number of classes");
    gen->add_option("--seed", gen_args.seed, "generator seed");
    gen->add_option("--out", gen_args.out, "output directory")->required();
    gen->add_option("--dtype", gen_args.dtype, "f32|f64 volume payload");

    TrainArgs train_args;
    CLI::App* tr = app.add_subcommand("train", "train a network and write metrics + checkpoint");
    add_spec_options(tr, train_args.spec);
    tr->add_option("--data", train_args.data, "dataset directory from 'gen'");
    tr->add_option("--task", train_args.task, "synthetic task when --data is absent");
    tr->add_option("--dims", train_args.dims, "synthetic volume dims D,H,W");
    tr->add_option("--count", train_args.count, "synthetic training samples");
    tr->add_option("--eval-count", train_args.eval_count, "synthetic eval samples");
    tr->add_option("--iters", train_args.iters, "training iterations");
    tr->add_option("--batch", train_args.batch, "batch size");
    tr->add_option("--lr", train_args.lr, "initial learning rate");
    tr->add_option("--power", train_args.power, "poly schedule power");
    tr->add_option("--momentum", train_args.momentum, "SGD momentum");
    tr->add_option("--seed", train_args.seed, "run seed");
    tr->add_option("--metrics-interval", train_args.metrics_interval, "iterations between rows");
    tr->add_option("--out", train_args.out, "output directory");

    EvalArgs eval_args;
    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
    ev->add_option("--data", eval_args.data, "dataset directory");
    ev->add_option("--task", eval_args.task, "synthetic task when --data is absent");
    ev->add_option("--dims", eval_args.dims, "synthetic volume dims D,H,W");
    ev->add_option("--count", eval_args.count, "synthetic eval samples");
    ev->add_option("--first-index", eval_args.first_index, "first synthetic sample index");
    ev->add_option("--seed", eval_args.seed, "synthetic generator seed");

    ProfileArgs profile_args;
    CLI::App* pr = app.add_subcommand("profile", "parameter and FLOP accounting");
    add_spec_options(pr, profile_args.spec);
    pr->add_option("--input", profile_args.input, "input dims N,D,H,W,C");
    pr->add_option("--baseline", profile_args.baseline, "compare against: conv3");
    pr->add_option("--out", profile_args.out, "write CSV here instead of stdout");

    VerifyArgs verify_args;
    CLI::App* vf = app.add_subcommand("verify-gs", "check the shift permutation properties");
    vf->add_option("--dims", verify_args.dims, "user config dims N,D,H,W,C");
    vf->add_option("--groups", verify_args.groups, "user config groups gd,gh,gw");
    vf->add_option("--cg", verify_args.cg, "channels per group");
    vf->add_option("--cs", verify_args.cs, "shifted channel count");
    vf->add_flag("--inject-corruption", verify_args.inject_corruption, "")->group("");

    BenchArgs bench_args;
    CLI::App* bn = app.add_subcommand("bench", "time the naive path against the table path");
    bn->add_option("--dims", bench_args.dims, "dims N,D,H,W,C");
    bn->add_option("--groups", bench_args.groups, "groups gd,gh,gw");
    bn->add_option("--shift-fraction", bench_args.fraction, "fraction of channels shifted");
    bn->add_option("--reps", bench_args.reps, "repetitions per timing");

    try {
        app.parse(argc, argv);
        set_threads(threads);
        if (gen->parsed()) return cmd_gen(gen_args);
        if (tr->parsed()) return cmd_train(train_args);
        if (ev->parsed()) return cmd_eval(eval_args);
        if (pr->parsed()) return cmd_profile(profile_args);
        if (vf->parsed()) return cmd_verify_gs(verify_args);
        if (bn->parsed()) return cmd_bench(bench_args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error[" << e.category() << "]: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
