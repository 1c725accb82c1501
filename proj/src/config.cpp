#include "eslm/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "eslm/error.hpp"

namespace eslm {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                         const char* section) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* k : known) {
            if (key == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError(std::string("config: unknown key '") + key + "' in " + section);
        }
    }
}

template <typename T>
void get_if_present(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) {
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
        }
    }
}

void parse_model(const json& obj, ModelConfig& model) {
    reject_unknown_keys(obj,
                        {"layers", "hidden", "heads", "kv_heads", "head_dim", "intermediate",
                         "vocab", "max_seq", "tie_embeddings", "rope_base"},
                        "model");
    get_if_present(obj, "layers", model.layers);
    get_if_present(obj, "hidden", model.hidden);
    get_if_present(obj, "heads", model.heads);
    get_if_present(obj, "kv_heads", model.kv_heads);
    get_if_present(obj, "head_dim", model.head_dim);
    get_if_present(obj, "intermediate", model.intermediate);
    get_if_present(obj, "vocab", model.vocab);
    get_if_present(obj, "max_seq", model.max_seq);
    get_if_present(obj, "tie_embeddings", model.tie_embeddings);
    get_if_present(obj, "rope_base", model.rope_base);
}

void parse_es(const json& obj, EsConfig& es) {
    reject_unknown_keys(obj,
                        {"population", "sigma", "alpha", "antithetic", "nes_scaling",
                         "normalization", "gamma_alpha", "gamma_sigma", "step_alpha",
                         "step_sigma", "group_multipliers", "noise_chunk", "workers",
                         "eval_center"},
                        "es");
    get_if_present(obj, "population", es.population);
    get_if_present(obj, "sigma", es.sigma);
    get_if_present(obj, "alpha", es.alpha);
    get_if_present(obj, "antithetic", es.antithetic);
    get_if_present(obj, "nes_scaling", es.nes_scaling);
    if (obj.contains("normalization")) {
        es.normalization = normalization_from_string(obj.at("normalization").get<std::string>());
    }
    get_if_present(obj, "gamma_alpha", es.gamma_alpha);
    get_if_present(obj, "gamma_sigma", es.gamma_sigma);
    get_if_present(obj, "step_alpha", es.step_alpha);
    get_if_present(obj, "step_sigma", es.step_sigma);
    if (obj.contains("group_multipliers")) {
        es.group_multipliers.clear();
        for (const json& g : obj.at("group_multipliers")) {
            reject_unknown_keys(g, {"pattern", "alpha", "sigma"}, "group_multipliers");
            GroupMultiplier mult;
            if (!g.contains("pattern")) {
                throw ConfigError("config: group multiplier missing 'pattern'");
            }
            mult.pattern = g.at("pattern").get<std::string>();
            get_if_present(g, "alpha", mult.alpha);
            get_if_present(g, "sigma", mult.sigma);
            es.group_multipliers.push_back(std::move(mult));
        }
    }
    get_if_present(obj, "noise_chunk", es.noise_chunk);
    get_if_present(obj, "workers", es.workers);
    get_if_present(obj, "eval_center", es.eval_center);
}

void parse_data(const json& obj, DataConfig& data) {
    reject_unknown_keys(obj, {"corpus_path", "line_cap", "max_seq_len", "tokenizer"}, "data");
    get_if_present(obj, "corpus_path", data.corpus_path);
    get_if_present(obj, "line_cap", data.line_cap);
    get_if_present(obj, "max_seq_len", data.max_seq_len);
    if (obj.contains("tokenizer")) {
        data.tokenizer = tokenizer_from_string(obj.at("tokenizer").get<std::string>());
    }
}

void parse_run(const json& obj, RunnerConfig& run) {
    reject_unknown_keys(obj,
                        {"iterations", "eval_samples", "micro_batch", "master_seed",
                         "checkpoint_every", "output_dir"},
                        "run");
    get_if_present(obj, "iterations", run.iterations);
    get_if_present(obj, "eval_samples", run.eval_samples);
    get_if_present(obj, "micro_batch", run.micro_batch);
    get_if_present(obj, "master_seed", run.master_seed);
    get_if_present(obj, "checkpoint_every", run.checkpoint_every);
    get_if_present(obj, "output_dir", run.output_dir);
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    es.validate();
    if (data.corpus_path.empty()) {
        throw ConfigError("config: data.corpus_path is required");
    }
    if (data.line_cap < 1) throw ConfigError("config: data.line_cap must be >= 1");
    if (data.max_seq_len < 2) throw ConfigError("config: data.max_seq_len must be >= 2");
    if (data.max_seq_len > model.max_seq) {
        throw ConfigError("config: data.max_seq_len exceeds model.max_seq");
    }
    if (tokenizer_vocab(data.tokenizer) > model.vocab) {
        throw ConfigError("config: tokenizer vocab exceeds model vocab");
    }
    if (run.iterations < 1) throw ConfigError("config: run.iterations must be >= 1");
    if (run.eval_samples < 1) throw ConfigError("config: run.eval_samples must be >= 1");
    if (run.micro_batch < 1) throw ConfigError("config: run.micro_batch must be >= 1");
    if (run.checkpoint_every < 0) {
        throw ConfigError("config: run.checkpoint_every must be >= 0");
    }
    if (run.output_dir.empty()) {
        throw ConfigError("config: run.output_dir is required");
    }
}

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: invalid JSON: ") + e.what());
    }
    reject_unknown_keys(root, {"model", "es", "data", "run"}, "top level");
    RunConfig config;
    if (root.contains("model")) parse_model(root.at("model"), config.model);
    if (root.contains("es")) parse_es(root.at("es"), config.es);
    if (root.contains("data")) parse_data(root.at("data"), config.data);
    if (root.contains("run")) parse_run(root.at("run"), config.run);
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string dump_run_config(const RunConfig& config) {
    json root;
    root["model"] = {{"layers", config.model.layers},
                     {"hidden", config.model.hidden},
                     {"heads", config.model.heads},
                     {"kv_heads", config.model.kv_heads},
                     {"head_dim", config.model.head_dim},
                     {"intermediate", config.model.intermediate},
                     {"vocab", config.model.vocab},
                     {"max_seq", config.model.max_seq},
                     {"tie_embeddings", config.model.tie_embeddings},
                     {"rope_base", config.model.rope_base}};
    json groups = json::array();
    for (const auto& g : config.es.group_multipliers) {
        groups.push_back({{"pattern", g.pattern}, {"alpha", g.alpha}, {"sigma", g.sigma}});
    }
    root["es"] = {{"population", config.es.population},
                  {"sigma", config.es.sigma},
                  {"alpha", config.es.alpha},
                  {"antithetic", config.es.antithetic},
                  {"nes_scaling", config.es.nes_scaling},
                  {"normalization", std::string(normalization_to_string(config.es.normalization))},
                  {"gamma_alpha", config.es.gamma_alpha},
                  {"gamma_sigma", config.es.gamma_sigma},
                  {"step_alpha", config.es.step_alpha},
                  {"step_sigma", config.es.step_sigma},
                  {"group_multipliers", groups},
                  {"noise_chunk", config.es.noise_chunk},
                  {"workers", config.es.workers},
                  {"eval_center", config.es.eval_center}};
    root["data"] = {{"corpus_path", config.data.corpus_path},
                    {"line_cap", config.data.line_cap},
                    {"max_seq_len", config.data.max_seq_len},
                    {"tokenizer", std::string(tokenizer_to_string(config.data.tokenizer))}};
    root["run"] = {{"iterations", config.run.iterations},
                   {"eval_samples", config.run.eval_samples},
                   {"micro_batch", config.run.micro_batch},
                   {"master_seed", config.run.master_seed},
                   {"checkpoint_every", config.run.checkpoint_every},
                   {"output_dir", config.run.output_dir}};
    return root.dump(2) + "\n";
}

}  // namespace eslm
