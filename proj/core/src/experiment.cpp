#include "promptforge/experiment.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "promptforge/errors.hpp"
#include "promptforge/text_format.hpp"

namespace promptforge {

namespace fs = std::filesystem;

namespace {

bool parse_bool(std::string_view text, std::string_view what) {
    const auto s = trim(text);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(std::string(what) + ": expected true or false, got '" + s + "'");
}

std::vector<std::string> parse_list(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& item : split(text, ',')) {
        auto t = trim(item);
        if (t.empty()) throw ConfigError("empty list entry in '" + std::string(text) + "'");
        out.push_back(std::move(t));
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

std::string pct(double v) { return format_fixed(v, 2); }

}  // namespace

void ExperimentConfig::validate() const {
    if (methods.empty()) throw ConfigError("at least one method is required");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (data.empty()) throw ConfigError("data must be 'synthetic' or a directory");
    for (const auto& m : methods) {
        try {
            train_config(m, seeds.front()).validate();
        } catch (const ParameterError& e) {
            throw ConfigError(e.what());
        }
    }
}

TrainConfig ExperimentConfig::train_config(const std::string& method, std::uint64_t seed) const {
    TrainConfig t;
    t.epochs = epochs;
    t.base_lr = base_lr;
    t.lambda = lambda;
    t.tau = tau;
    t.shots = shots;
    t.seed = seed;
    t.method = MethodSpec::parse(method, lambda, tau);
    t.batch_size = batch_size;
    t.context_length = context_length;
    t.metanet_init = parse_metanet_init(metanet_init);
    return t;
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    std::map<std::string, std::function<void(const std::string&)>> setters{
        {"data", [&](const std::string& v) { cfg.data = v; }},
        {"classes", [&](const std::string& v) { cfg.classes = parse_size(v, "classes"); }},
        {"per_class", [&](const std::string& v) { cfg.per_class = parse_size(v, "per_class"); }},
        {"data_seed", [&](const std::string& v) { cfg.data_seed = parse_u64(v, "data_seed"); }},
        {"encoder_seed", [&](const std::string& v) { cfg.encoder_seed = parse_u64(v, "encoder_seed"); }},
        {"methods", [&](const std::string& v) { cfg.methods = parse_list(v); }},
        {"seeds",
         [&](const std::string& v) {
             cfg.seeds.clear();
             for (const auto& s : parse_list(v)) cfg.seeds.push_back(parse_u64(s, "seeds"));
         }},
        {"epochs", [&](const std::string& v) { cfg.epochs = parse_size(v, "epochs"); }},
        {"base_lr", [&](const std::string& v) { cfg.base_lr = parse_double(v, "base_lr"); }},
        {"lambda", [&](const std::string& v) { cfg.lambda = parse_double(v, "lambda"); }},
        {"tau", [&](const std::string& v) { cfg.tau = parse_double(v, "tau"); }},
        {"shots", [&](const std::string& v) { cfg.shots = parse_size(v, "shots"); }},
        {"batch_size", [&](const std::string& v) { cfg.batch_size = parse_size(v, "batch_size"); }},
        {"context_length", [&](const std::string& v) { cfg.context_length = parse_size(v, "context_length"); }},
        {"metanet_init", [&](const std::string& v) { cfg.metanet_init = v; }},
        {"output", [&](const std::string& v) { cfg.output = v; }},
        {"checkpoints", [&](const std::string& v) { cfg.checkpoints = parse_bool(v, "checkpoints"); }},
    };
    std::map<std::string, std::size_t> seen;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        const auto body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + body + "'");
        }
        const auto key = trim(body.substr(0, eq));
        const auto value = trim(body.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (seen.count(key)) {
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "' (first on line " +
                              std::to_string(seen[key]) + ")");
        }
        seen[key] = line_no;
        it->second(value);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_text(const ExperimentConfig& cfg) {
    std::vector<std::string> seeds;
    for (auto s : cfg.seeds) seeds.push_back(std::to_string(s));
    std::ostringstream out;
    out << "data = " << cfg.data << "\n"
        << "classes = " << cfg.classes << "\n"
        << "per_class = " << cfg.per_class << "\n"
        << "data_seed = " << cfg.data_seed << "\n"
        << "encoder_seed = " << cfg.encoder_seed << "\n"
        << "methods = " << join(cfg.methods, ",") << "\n"
        << "seeds = " << join(seeds, ",") << "\n"
        << "epochs = " << cfg.epochs << "\n"
        << "base_lr = " << format_double(cfg.base_lr) << "\n"
        << "lambda = " << format_double(cfg.lambda) << "\n"
        << "tau = " << format_double(cfg.tau) << "\n"
        << "shots = " << cfg.shots << "\n"
        << "batch_size = " << cfg.batch_size << "\n"
        << "context_length = " << cfg.context_length << "\n"
        << "metanet_init = " << cfg.metanet_init << "\n"
        << "output = " << cfg.output << "\n"
        << "checkpoints = " << (cfg.checkpoints ? "true" : "false") << "\n";
    return out.str();
}

Dataset load_dataset(const ExperimentConfig& cfg) {
    if (cfg.data == "synthetic") return generate_synthetic(cfg.classes, cfg.per_class, cfg.data_seed);
    return load_directory(cfg.data);
}

const MethodSummary& ExperimentResult::summary(const std::string& method) const {
    for (const auto& s : averaged) {
        if (s.method == method) return s;
    }
    throw ConfigError("method '" + method + "' not in experiment result");
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress) {
    cfg.validate();
    const Dataset ds = load_dataset(cfg);
    if (ds.num_classes() < 2) throw DataError("experiments need at least two classes");
    const SplitSpec split = SplitSpec::halves(ds.num_classes());
    const EncoderWeights encoders = EncoderWeights::generate(cfg.encoder_seed);
    const auto features = encode_dataset(ds, encoders);

    if (!cfg.output.empty()) {
        std::error_code ec;
        fs::create_directories(cfg.output, ec);
        if (ec) throw IoError("cannot create output directory " + cfg.output);
    }

    ExperimentResult result;
    for (const auto& method : cfg.methods) {
        MethodSummary avg;
        for (const auto seed : cfg.seeds) {
            const TrainConfig tc = cfg.train_config(method, seed);
            const TrainedState state = train(ds, split, tc, encoders, &features);
            CellResult cell;
            cell.method = tc.method.name();
            cell.seed = seed;
            cell.report = evaluate_all(state, ds, split, encoders, &features);
            cell.train_acc = accuracy_on(state, ds, state.sample.indices, split.base_classes, encoders, &features);
            cell.first_loss = state.epoch_losses.empty() ? 0.0 : state.epoch_losses.front();
            cell.final_loss = state.epoch_losses.empty() ? 0.0 : state.epoch_losses.back();
            if (!cfg.output.empty() && cfg.checkpoints) {
                const std::map<std::string, std::string> extra{
                    {"data", cfg.data},
                    {"classes", std::to_string(cfg.classes)},
                    {"per_class", std::to_string(cfg.per_class)},
                    {"data_seed", std::to_string(cfg.data_seed)},
                };
                save_checkpoint(state, fs::path(cfg.output) / (cell.method + "_seed" + std::to_string(seed) + ".ckpt"),
                                extra);
            }
            avg.base_acc += cell.report.base_acc;
            avg.new_acc += cell.report.new_acc;
            avg.hos += cell.report.hos;
            avg.discrimination += cell.report.discrimination;
            avg.train_acc += cell.train_acc;
            if (progress) progress(cell);
            result.cells.push_back(std::move(cell));
        }
        const double n = static_cast<double>(cfg.seeds.size());
        avg.method = MethodSpec::parse(method).name();
        avg.base_acc /= n;
        avg.new_acc /= n;
        avg.hos /= n;
        avg.discrimination /= n;
        avg.train_acc /= n;
        result.averaged.push_back(avg);
    }

    if (!cfg.output.empty()) {
        const fs::path dir(cfg.output);
        write_text(dir / "per_seed.csv", per_seed_csv(result));
        write_text(dir / "summary.csv", summary_csv(result));
        write_text(dir / "summary.md", summary_markdown(cfg, result));
        write_text(dir / "config.txt", config_to_text(cfg));
    }
    return result;
}

std::string per_seed_csv(const ExperimentResult& result) {
    std::ostringstream out;
    out << "method,seed,base,new,hos,discrimination,train_acc,first_loss,final_loss\n";
    for (const auto& c : result.cells) {
        out << c.method << "," << c.seed << "," << format_double(c.report.base_acc) << ","
            << format_double(c.report.new_acc) << "," << format_double(c.report.hos) << ","
            << format_double(c.report.discrimination) << "," << format_double(c.train_acc) << ","
            << format_double(c.first_loss) << "," << format_double(c.final_loss) << "\n";
    }
    return out.str();
}

std::string summary_csv(const ExperimentResult& result) {
    std::ostringstream out;
    out << "method,base,new,hos,discrimination,train_acc\n";
    for (const auto& s : result.averaged) {
        out << s.method << "," << format_double(s.base_acc) << "," << format_double(s.new_acc) << ","
            << format_double(s.hos) << "," << format_double(s.discrimination) << "," << format_double(s.train_acc)
            << "\n";
    }
    return out.str();
}

std::string summary_markdown(const ExperimentConfig& cfg, const ExperimentResult& result) {
    std::ostringstream out;
    out << "# Base-to-new results\n\n";
    out << "Averaged over " << cfg.seeds.size() << " seed(s).\n\n";
    out << "```\n" << config_to_text(cfg) << "```\n\n";
    out << "| Method | Base | New | Hos | Distance |\n";
    out << "|---|---:|---:|---:|---:|\n";
    for (const auto& s : result.averaged) {
        out << "| " << s.method << " | " << pct(s.base_acc) << " | " << pct(s.new_acc) << " | " << pct(s.hos)
            << " | " << format_fixed(s.discrimination, 4) << " |\n";
    }
    return out.str();
}

ExperimentConfig config_from_markdown(std::string_view markdown) {
    const auto open = markdown.find("```\n");
    if (open == std::string_view::npos) throw FormatError("no echoed config in report");
    const auto start = open + 4;
    const auto close = markdown.find("```", start);
    if (close == std::string_view::npos) throw FormatError("unterminated config block in report");
    return parse_config(markdown.substr(start, close - start));
}

}  // namespace promptforge
