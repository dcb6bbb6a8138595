#include "confae/cli/config_io.hpp"

#include "confae/errors.hpp"

#include <openssl/evp.h>

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

namespace confae::cli {

namespace {

using Errors = std::vector<std::string>;

std::string key_path(const std::string& prefix, std::string_view key) {
  return prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& prefix, Errors& errors) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.contains(key)) errors.push_back(fmt::format("{}: unknown key", key_path(prefix, key)));
  }
}

// Each reader leaves `out` untouched when the key is absent or malformed.
void read_int(const json& obj, const char* key, int& out, const std::string& prefix, Errors& errors) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < std::numeric_limits<int>::min() ||
      v.get<long long>() > std::numeric_limits<int>::max()) {
    errors.push_back(fmt::format("{}: expected an integer, got {}", key_path(prefix, key), v.dump()));
    return;
  }
  out = v.get<int>();
}

void read_double(const json& obj, const char* key, double& out, const std::string& prefix, Errors& errors) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number()) {
    errors.push_back(fmt::format("{}: expected a number, got {}", key_path(prefix, key), v.dump()));
    return;
  }
  out = v.get<double>();
}

void read_bool(const json& obj, const char* key, bool& out, const std::string& prefix, Errors& errors) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_boolean()) {
    errors.push_back(fmt::format("{}: expected true or false, got {}", key_path(prefix, key), v.dump()));
    return;
  }
  out = v.get<bool>();
}

void read_string(const json& obj, const char* key, std::string& out, const std::string& prefix, Errors& errors) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_string()) {
    errors.push_back(fmt::format("{}: expected a string, got {}", key_path(prefix, key), v.dump()));
    return;
  }
  out = v.get<std::string>();
}

json matrix_to_json(const Matrix& m) {
  json flat = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return flat;
}

Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows * cols)
    throw ParseError(fmt::format("checkpoint: {} should hold {} numbers", what, rows * cols));
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(r * cols + c)].get<double>();
  return m;
}

json adam_to_json(const train::AdamState& s) {
  json j;
  j["step"] = s.step;
  for (const char* key : {"m_weight", "v_weight", "m_bias", "v_bias"}) j[key] = json::array();
  for (std::size_t i = 0; i < s.m_weight.size(); ++i) {
    j["m_weight"].push_back(matrix_to_json(s.m_weight[i]));
    j["v_weight"].push_back(matrix_to_json(s.v_weight[i]));
    j["m_bias"].push_back(matrix_to_json(s.m_bias[i]));
    j["v_bias"].push_back(matrix_to_json(s.v_bias[i]));
  }
  return j;
}

train::AdamState adam_from_json(const json& j, const nn::Mlp& net) {
  train::AdamState s = train::AdamState::zeros_like(net);
  s.step = j.at("step").get<long>();
  for (const char* key : {"m_weight", "v_weight", "m_bias", "v_bias"}) {
    if (!j.at(key).is_array() || j.at(key).size() != net.depth())
      throw ParseError(fmt::format("checkpoint: optimizer {} does not match the network depth", key));
  }
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const Matrix& w = net.layer(i).weight;
    s.m_weight[i] = matrix_from_json(j["m_weight"][i], w.rows(), w.cols(), "m_weight");
    s.v_weight[i] = matrix_from_json(j["v_weight"][i], w.rows(), w.cols(), "v_weight");
    s.m_bias[i] = matrix_from_json(j["m_bias"][i], w.rows(), 1, "m_bias").col(0);
    s.v_bias[i] = matrix_from_json(j["v_bias"][i], w.rows(), 1, "v_bias").col(0);
  }
  return s;
}

}  // namespace

json config_to_json(const ResolvedConfig& cfg) {
  const train::RunConfig& r = cfg.run;
  json j;
  j["regularizer"] = reg::to_string(r.regularizer);
  j["lambda_geo"] = r.lambda_geo ? json(*r.lambda_geo) : json(nullptr);
  j["epochs"] = r.epochs;
  j["batch_size"] = r.batch_size;
  j["learning_rate"] = r.learning_rate;
  j["weight_decay"] = r.weight_decay;
  j["beta1"] = r.beta1;
  j["beta2"] = r.beta2;
  j["epsilon"] = r.epsilon;
  j["probes"] = r.probes;
  j["scheduler"] = {{"enabled", r.scheduler.enabled},
                    {"factor", r.scheduler.factor},
                    {"patience", r.scheduler.patience},
                    {"min_lr", r.scheduler.min_lr}};
  j["seed"] = r.seed;
  j["exact_trace"] = r.exact_trace;
  j["detach_codes"] = r.detach_codes;
  j["encoder_dims"] = r.encoder_dims;
  j["activation"] = r.activation;
  j["val_fraction"] = r.val_fraction;
  j["checkpoint_every"] = r.checkpoint_every;
  j["data"] = {{"path", cfg.data.path ? json(*cfg.data.path) : json(nullptr)}, {"n", cfg.data.n}};
  return j;
}

ResolvedConfig parse_config(const json& j, Errors& errors) {
  ResolvedConfig cfg;
  if (!j.is_object()) {
    errors.emplace_back("config: expected a JSON object");
    return cfg;
  }
  train::RunConfig& r = cfg.run;
  reject_unknown(j,
                 {"regularizer", "lambda_geo", "epochs", "batch_size", "learning_rate", "weight_decay", "beta1", "beta2",
                  "epsilon", "probes", "scheduler", "seed", "exact_trace", "detach_codes", "encoder_dims", "activation",
                  "val_fraction", "checkpoint_every", "data"},
                 "", errors);

  if (j.contains("regularizer")) {
    std::string tag;
    read_string(j, "regularizer", tag, "", errors);
    if (!tag.empty()) {
      try {
        r.regularizer = reg::parse_regularizer(tag);
      } catch (const ConfigError& e) {
        errors.push_back(fmt::format("regularizer: {}", e.what()));
      }
    }
  }
  if (j.contains("lambda_geo") && !j.at("lambda_geo").is_null()) {
    double v = 0.0;
    const std::size_t before = errors.size();
    read_double(j, "lambda_geo", v, "", errors);
    if (errors.size() == before) r.lambda_geo = v;
  }
  read_int(j, "epochs", r.epochs, "", errors);
  read_int(j, "batch_size", r.batch_size, "", errors);
  read_double(j, "learning_rate", r.learning_rate, "", errors);
  read_double(j, "weight_decay", r.weight_decay, "", errors);
  read_double(j, "beta1", r.beta1, "", errors);
  read_double(j, "beta2", r.beta2, "", errors);
  read_double(j, "epsilon", r.epsilon, "", errors);
  read_int(j, "probes", r.probes, "", errors);
  if (j.contains("scheduler")) {
    const json& s = j.at("scheduler");
    if (!s.is_object()) {
      errors.emplace_back("scheduler: expected an object");
    } else {
      reject_unknown(s, {"enabled", "factor", "patience", "min_lr"}, "scheduler", errors);
      read_bool(s, "enabled", r.scheduler.enabled, "scheduler", errors);
      read_double(s, "factor", r.scheduler.factor, "scheduler", errors);
      read_int(s, "patience", r.scheduler.patience, "scheduler", errors);
      read_double(s, "min_lr", r.scheduler.min_lr, "scheduler", errors);
    }
  }
  if (j.contains("seed")) {
    const json& v = j.at("seed");
    if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0))
      r.seed = v.get<std::uint64_t>();
    else
      errors.push_back(fmt::format("seed: expected a non-negative integer, got {}", v.dump()));
  }
  read_bool(j, "exact_trace", r.exact_trace, "", errors);
  read_bool(j, "detach_codes", r.detach_codes, "", errors);
  if (j.contains("encoder_dims")) {
    const json& v = j.at("encoder_dims");
    bool ok = v.is_array();
    if (ok)
      for (const json& d : v) ok = ok && d.is_number_integer();
    if (ok)
      r.encoder_dims = v.get<std::vector<int>>();
    else
      errors.push_back(fmt::format("encoder_dims: expected an array of integers, got {}", v.dump()));
  }
  read_string(j, "activation", r.activation, "", errors);
  read_double(j, "val_fraction", r.val_fraction, "", errors);
  read_int(j, "checkpoint_every", r.checkpoint_every, "", errors);

  if (j.contains("data")) {
    const json& d = j.at("data");
    if (!d.is_object()) {
      errors.emplace_back("data: expected an object");
    } else {
      reject_unknown(d, {"path", "n"}, "data", errors);
      if (d.contains("path") && !d.at("path").is_null()) {
        std::string p;
        read_string(d, "path", p, "data", errors);
        if (!p.empty()) cfg.data.path = p;
      }
      if (d.contains("n")) {
        const json& n = d.at("n");
        if (n.is_number_integer() && n.get<long long>() >= 1)
          cfg.data.n = n.get<std::size_t>();
        else
          errors.push_back(fmt::format("data.n: expected a positive integer, got {}", n.dump()));
      }
    }
  }
  return cfg;
}

ResolvedConfig resolve_config(const json& j, bool allow_missing_lambda) {
  Errors errors;
  ResolvedConfig cfg = parse_config(j, errors);
  train::RunConfig check = cfg.run;
  if (allow_missing_lambda && !check.lambda_geo) check.lambda_geo = 0.0;
  for (std::string& e : check.validate()) errors.push_back(std::move(e));
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const std::string& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

void apply_override(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw UsageError(fmt::format("override '{}' is not of the form key=value", assignment));
  const std::string_view key = assignment.substr(0, eq);
  const std::string value(assignment.substr(eq + 1));
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part(key.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
    if (part.empty()) throw UsageError(fmt::format("override '{}' has an empty key segment", assignment));
    if (!node->is_object()) *node = json::object();
    if (dot == std::string_view::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? json(value) : std::move(parsed);
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

void append_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError(fmt::format("cannot open '{}' for appending", path.string()));
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_json(const std::filesystem::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

std::string git_blob_sha1(std::string_view content) {
  const std::string header = fmt::format("blob {}", content.size());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = ctx != nullptr && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size() + 1) == 1 &&  // includes the NUL
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 && EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw IoError("SHA-1 digest failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

json checkpoint_to_json(const Checkpoint& ck) {
  const train::TrainState& s = ck.state;
  json j;
  j["format"] = "confae-checkpoint";
  j["format_version"] = kRunCheckpointVersion;
  j["epoch"] = s.epoch;
  j["config"] = config_to_json(ck.config);
  j["split"] = {{"val_fraction", ck.config.run.val_fraction}, {"seed", ck.config.run.seed}};
  j["encoder"] = s.encoder;
  j["decoder"] = s.decoder;
  j["optimizer"] = {{"encoder", adam_to_json(s.encoder_opt)}, {"decoder", adam_to_json(s.decoder_opt)}};
  j["scheduler"] = {{"lr", s.scheduler.lr},
                    {"best", std::isfinite(s.scheduler.best) ? json(s.scheduler.best) : json(nullptr)},
                    {"bad_epochs", s.scheduler.bad_epochs}};
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != "confae-checkpoint")
    throw ParseError("not a training checkpoint (missing format tag)");
  if (j.value("format_version", 0) != kRunCheckpointVersion)
    throw ParseError(fmt::format("unsupported checkpoint version {}", j.value("format_version", 0)));
  try {
    Checkpoint ck;
    Errors errors;
    ck.config = parse_config(j.at("config"), errors);
    if (!errors.empty()) throw ParseError("checkpoint config: " + errors.front());
    train::TrainState& s = ck.state;
    s.epoch = j.at("epoch").get<int>();
    s.encoder = j.at("encoder").get<nn::Mlp>();
    s.decoder = j.at("decoder").get<nn::Mlp>();
    s.encoder_opt = adam_from_json(j.at("optimizer").at("encoder"), s.encoder);
    s.decoder_opt = adam_from_json(j.at("optimizer").at("decoder"), s.decoder);
    const json& sch = j.at("scheduler");
    s.scheduler.lr = sch.at("lr").get<double>();
    s.scheduler.best = sch.at("best").is_null() ? std::numeric_limits<double>::infinity() : sch.at("best").get<double>();
    s.scheduler.bad_epochs = sch.at("bad_epochs").get<int>();
    return ck;
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("malformed checkpoint: {}", e.what()));
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return checkpoint_from_json(read_json(path));
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace confae::cli
