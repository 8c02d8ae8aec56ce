#include "topictrail/beta.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "topictrail/error.hpp"
#include "topictrail/io.hpp"

namespace topictrail {
namespace {

using json = nlohmann::json;

// Rows closer to one than this are left untouched, which keeps a
// write/reload cycle bit-exact.
constexpr double kRenormalizeSlack = 1e-6;

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + '\n';
  return out;
}

std::uint32_t byteswap32(std::uint32_t x) {
  return ((x & 0xFFu) << 24) | ((x & 0xFF00u) << 8) | ((x >> 8) & 0xFF00u) | (x >> 24);
}

std::vector<float> decode_f32(const std::string& bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t raw = 0;
    std::memcpy(&raw, bytes.data() + i * 4, 4);
    if constexpr (std::endian::native == std::endian::big) raw = byteswap32(raw);
    out[i] = std::bit_cast<float>(raw);
  }
  return out;
}

std::string encode_f32(const std::vector<float>& values) {
  std::string out(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto raw = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) raw = byteswap32(raw);
    std::memcpy(out.data() + i * 4, &raw, 4);
  }
  return out;
}

void check_index(bool ok, const char* what, std::size_t value, std::size_t bound) {
  if (!ok) {
    throw Error(ErrorCode::IndexOutOfRange, std::string(what) + " " + std::to_string(value) +
                                                " out of range [0, " + std::to_string(bound) + ")");
  }
}

}  // namespace

BetaTensor::BetaTensor(std::size_t num_times, std::size_t num_topics, std::vector<float> values,
                       std::vector<std::string> vocab, std::vector<std::string> timestamps,
                       std::string model_name)
    : T_(num_times),
      K_(num_topics),
      V_(vocab.size()),
      values_(std::move(values)),
      vocab_(std::move(vocab)),
      timestamps_(std::move(timestamps)),
      model_name_(std::move(model_name)) {
  if (T_ == 0 || K_ == 0 || V_ == 0) {
    throw Error(ErrorCode::ShapeMismatch, "T, K and V must all be >= 1");
  }
  if (values_.size() != T_ * K_ * V_) {
    throw Error(ErrorCode::ShapeMismatch,
                "expected " + std::to_string(T_ * K_ * V_) + " values (T*K*V), got " +
                    std::to_string(values_.size()));
  }
  if (timestamps_.size() != T_) {
    throw Error(ErrorCode::ShapeMismatch, "tensor has T=" + std::to_string(T_) + " but " +
                                              std::to_string(timestamps_.size()) + " timestamp labels");
  }
  for (std::size_t t = 0; t < T_; ++t) {
    for (std::size_t k = 0; k < K_; ++k) {
      float* row = values_.data() + (t * K_ + k) * V_;
      double sum = 0.0;
      for (std::size_t v = 0; v < V_; ++v) {
        if (!std::isfinite(row[v]) || row[v] < 0.0f) {
          throw Error(ErrorCode::NotADistribution,
                      "row (t=" + std::to_string(t) + ", k=" + std::to_string(k) +
                          ") has a negative or non-finite entry at v=" + std::to_string(v));
        }
        sum += row[v];
      }
      const double dev = std::abs(sum - 1.0);
      if (dev > kRowSumTolerance) {
        throw Error(ErrorCode::NotADistribution, "row (t=" + std::to_string(t) +
                                                     ", k=" + std::to_string(k) + ") sums to " +
                                                     std::to_string(sum));
      }
      if (dev > kRenormalizeSlack) {
        for (std::size_t v = 0; v < V_; ++v) row[v] = static_cast<float>(row[v] / sum);
      }
    }
  }
  for (TermId v = 0; v < V_; ++v) term_ids_.emplace(vocab_[v], v);
  vocab_ref_ = sha256_hex(join_lines(vocab_));
  timestamp_ref_ = sha256_hex(join_lines(timestamps_));
}

std::optional<TermId> BetaTensor::term_id(const std::string& term) const {
  auto it = term_ids_.find(term);
  if (it == term_ids_.end()) return std::nullopt;
  return it->second;
}

BetaTensor load_beta(const std::filesystem::path& meta_path, const std::filesystem::path& tensor_path,
                     const std::filesystem::path& vocab_path,
                     const std::filesystem::path& timestamps_path) {
  json meta;
  try {
    meta = json::parse(read_file(meta_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, meta_path.string() + ": " + e.what());
  }
  std::size_t T = 0, K = 0, V = 0;
  std::string model_name;
  try {
    T = meta.at("num_times").get<std::size_t>();
    K = meta.at("num_topics").get<std::size_t>();
    V = meta.at("vocab_size").get<std::size_t>();
    model_name = meta.value("model_name", std::string{});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, meta_path.string() + ": " + e.what());
  }

  std::vector<float> values;
  if (tensor_path.extension() == ".json") {
    json nested;
    try {
      nested = json::parse(read_file(tensor_path));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, tensor_path.string() + ": " + e.what());
    }
    auto shape_error = [&] {
      return Error(ErrorCode::ShapeMismatch,
                   tensor_path.string() + " is not a [" + std::to_string(T) + "][" +
                       std::to_string(K) + "][" + std::to_string(V) + "] array");
    };
    if (!nested.is_array() || nested.size() != T) throw shape_error();
    for (const auto& slice : nested) {
      if (!slice.is_array() || slice.size() != K) throw shape_error();
      for (const auto& row : slice) {
        if (!row.is_array() || row.size() != V) throw shape_error();
        for (const auto& x : row) {
          if (!x.is_number()) throw Error(ErrorCode::Parse, tensor_path.string() + ": non-numeric entry");
          values.push_back(x.get<float>());
        }
      }
    }
  } else {
    const auto bytes = read_file(tensor_path);
    if (bytes.size() % 4 != 0 || bytes.size() / 4 != T * K * V) {
      throw Error(ErrorCode::ShapeMismatch,
                  tensor_path.string() + " holds " + std::to_string(bytes.size() / 4) +
                      " floats but model_meta.json declares T*K*V = " + std::to_string(T * K * V));
    }
    values = decode_f32(bytes);
  }

  auto vocab = read_lines(vocab_path);
  if (vocab.size() != V) {
    throw Error(ErrorCode::VocabMismatch, "model_meta.json declares V=" + std::to_string(V) + " but " +
                                              vocab_path.string() + " has " +
                                              std::to_string(vocab.size()) + " lines");
  }
  auto timestamps = read_lines(timestamps_path);
  return BetaTensor(T, K, std::move(values), std::move(vocab), std::move(timestamps),
                    std::move(model_name));
}

BetaTensor load_beta(const std::filesystem::path& model_dir, const std::filesystem::path& corpus_dir) {
  const auto meta = model_dir / "model_meta.json";
  if (!std::filesystem::exists(meta)) throw Error(ErrorCode::Io, "missing " + meta.string());
  auto tensor = model_dir / "beta.f32";
  if (!std::filesystem::exists(tensor)) {
    tensor = model_dir / "beta.json";
    if (!std::filesystem::exists(tensor)) {
      throw Error(ErrorCode::Io, "missing " + (model_dir / "beta.f32").string());
    }
  }
  return load_beta(meta, tensor, corpus_dir / "vocab.txt", corpus_dir / "timestamps.txt");
}

void write_beta(const BetaTensor& beta, const std::filesystem::path& model_dir) {
  json meta;
  meta["num_times"] = beta.num_times();
  meta["num_topics"] = beta.num_topics();
  meta["vocab_size"] = beta.vocab_size();
  meta["model_name"] = beta.model_name();
  write_file_atomic(model_dir / "model_meta.json", meta.dump(2) + "\n");
  write_file_atomic(model_dir / "beta.f32", encode_f32(beta.values()));
}

TopWordSet top_words(const BetaTensor& beta, std::size_t k, std::size_t t, std::size_t n) {
  check_index(k < beta.num_topics(), "topic", k, beta.num_topics());
  check_index(t < beta.num_times(), "time", t, beta.num_times());
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "N must be >= 1");
  const auto row = beta.row(t, k);
  std::vector<TermId> ids(row.size());
  std::iota(ids.begin(), ids.end(), TermId{0});
  const auto take = std::min(n, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take), ids.end(),
                    [&](TermId a, TermId b) { return row[a] != row[b] ? row[a] > row[b] : a < b; });
  ids.resize(take);
  TopWordSet out{k, t, std::move(ids), {}};
  out.words.reserve(take);
  for (auto v : out.ids) out.words.push_back(beta.vocab()[v]);
  return out;
}

Trajectory trajectory(const BetaTensor& beta, std::size_t k, TermId v) {
  check_index(k < beta.num_topics(), "topic", k, beta.num_topics());
  check_index(v < beta.vocab_size(), "word", v, beta.vocab_size());
  Trajectory out{k, v, std::vector<double>(beta.num_times())};
  for (std::size_t t = 0; t < beta.num_times(); ++t) out.series[t] = beta.at(t, k, v);
  return out;
}

}  // namespace topictrail
