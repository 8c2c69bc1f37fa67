#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "nugr/attributes.hpp"
#include "nugr/error.hpp"
#include "nugr/hog.hpp"
#include "nugr/linalg.hpp"
#include "nugr/rng.hpp"

namespace nugr {

using TokenId = std::int32_t;

inline constexpr std::string_view kDetToken = "[DET]";
inline constexpr std::string_view kEmbToken = "[EMB]";
inline constexpr std::string_view kEosToken = "[EOS]";
inline constexpr std::string_view kUnkToken = "[UNK]";

// Base vocabulary extended with the two grounding tokens. [DET] and [EMB]
// always take the last two ids, after every base token.
class Vocabulary {
 public:
  explicit Vocabulary(std::span<const std::string> base_tokens) {
    add_base(kUnkToken);
    add_base(kEosToken);
    for (const auto& t : base_tokens) {
      if (t == kDetToken || t == kEmbToken) {
        throw ValidationError("grounding tokens cannot be part of the base vocabulary");
      }
      add_base(t);
    }
    det_ = add_base(kDetToken);
    emb_ = add_base(kEmbToken);
  }

  TokenId det_id() const { return det_; }
  TokenId emb_id() const { return emb_; }
  TokenId eos_id() const { return 1; }
  TokenId unk_id() const { return 0; }
  std::size_t size() const { return tokens_.size(); }

  TokenId id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? unk_id() : it->second;
  }

  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  // Whitespace split; a trailing '.' becomes its own token; words lowercased.
  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<TokenId> out;
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      std::size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j == i) break;
      std::string word(text.substr(i, j - i));
      const bool period = word.size() > 1 && word.back() == '.';
      if (period) word.pop_back();
      if (word.front() != '[') {
        for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      out.push_back(id(word));
      if (period) out.push_back(id("."));
      i = j;
    }
    return out;
  }

  std::vector<std::string> decode(std::span<const TokenId> ids) const {
    std::vector<std::string> out;
    for (const TokenId t : ids) out.push_back(token(t));
    return out;
  }

 private:
  TokenId add_base(std::string_view t) {
    const std::string key(t);
    if (auto it = ids_.find(key); it != ids_.end()) return it->second;
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(key);
    ids_.emplace(key, id);
    return id;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  TokenId det_ = 0;
  TokenId emb_ = 0;
};

// Every word that prompt and response templates can produce.
inline Vocabulary default_vocabulary() {
  std::vector<std::string> base = {
      ".",     "please", "detect", "all",   "the",   "objects", "object", "in",
      "of",    "ego",    "vehicle", "there", "is",   "are",     "it",     "they",
      "at",    "moving", "stopped", "front", "back", "left",    "right",  "construction",
      "traffic", "cone", "cones",   "vehicles"};
  for (const auto c : kCategoryNames) {
    for (const bool plural : {false, true}) {
      for (auto& w : tokenize_words(category_phrase(*parse_category(c), plural))) {
        base.push_back(std::move(w));
      }
    }
  }
  for (const auto c : kColorPalette) base.emplace_back(c);
  for (const char* n : {"one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
                        "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
                        "seventeen", "eighteen", "nineteen", "twenty"}) {
    base.emplace_back(n);
  }
  return Vocabulary(base);
}

inline std::string count_word(int count) {
  static constexpr std::array<std::string_view, 21> kWords = {
      "zero",     "one",      "two",     "three",     "four",     "five",    "six",
      "seven",    "eight",    "nine",    "ten",       "eleven",   "twelve",  "thirteen",
      "fourteen", "fifteen",  "sixteen", "seventeen", "eighteen", "nineteen", "twenty"};
  if (count >= 0 && count <= 20) return std::string(kWords[static_cast<std::size_t>(count)]);
  return std::to_string(count);
}

// "There {is|are} {count} {movement} {color} {category|object(s)} in the
// {sector} of the ego vehicle. {It is|They are} at [DET] [EMB]"
inline std::string render_thinking_response(const AttributeValues& values, int count) {
  if (count < 1) throw ValidationError("count must be at least 1");
  const bool plural = count > 1;
  std::vector<std::string> words = {"There", plural ? "are" : "is", count_word(count)};
  if (auto it = values.find(Attribute::Movement); it != values.end()) words.push_back(it->second);
  if (auto it = values.find(Attribute::Appearance); it != values.end()) words.push_back(it->second);
  if (auto it = values.find(Attribute::Category); it != values.end()) {
    words.push_back(category_phrase(detail::parse_category_value(it->second), plural));
  } else {
    words.push_back(plural ? "objects" : "object");
  }
  if (auto it = values.find(Attribute::Relationship); it != values.end()) {
    words.push_back("in the " + sector_phrase(detail::parse_sector(it->second)) +
                    " of the ego vehicle");
  }
  return detail::join_words(words) + ". " + (plural ? "They are" : "It is") + " at " +
         std::string(kDetToken) + " " + std::string(kEmbToken);
}

// Maps object queries (C_B) into the language model's embedding space (C_L).
struct Adapter {
  Mlp mlp;

  static Adapter seeded(Eigen::Index query_dim, Eigen::Index hidden_dim, std::uint64_t seed,
                        Activation act = Activation::Relu) {
    SplitMix64 rng(derive_seed(seed, "adapter"));
    return Adapter{Mlp::seeded(query_dim, hidden_dim, hidden_dim, rng, act)};
  }

  Eigen::Index out_dim() const { return mlp.out_dim(); }
  Matrix operator()(const Matrix& q) const { return mlp(q); }
};

// Concatenates adapted object queries with text embeddings, row-wise.
inline Matrix build_multimodal_input(const Matrix& object_queries, const Adapter& adapter,
                                     const Matrix& text_embeddings) {
  if (object_queries.rows() < 1) throw DimensionMismatch("object query set is empty");
  require_cols(object_queries, adapter.mlp.in_dim(), "object queries");
  require_cols(text_embeddings, adapter.out_dim(), "text embeddings");
  Matrix out(object_queries.rows() + text_embeddings.rows(), adapter.out_dim());
  out.topRows(object_queries.rows()) = adapter(object_queries);
  out.bottomRows(text_embeddings.rows()) = text_embeddings;
  return out;
}

struct StepOutput {
  RowVector hidden;
  RowVector logits;
  TokenId next = 0;
};

// Auto-regressive step function: given the full input embedding sequence,
// returns the last hidden state and the next (greedy) token.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual Eigen::Index hidden_dim() const = 0;
  virtual StepOutput step(const Matrix& prefix) const = 0;
  virtual RowVector embed(TokenId token) const = 0;
};

// Deterministic stand-in for a pretrained LM: hidden = mean(prefix) W + b,
// logits = hidden E^T with a seeded embedding table E, and a scripted token
// schedule indexed by the number of response positions already consumed.
class ToyLM final : public LanguageModel {
 public:
  ToyLM(std::uint64_t seed, Eigen::Index hidden_dim, std::size_t vocab_size,
        Eigen::Index prompt_length, std::vector<TokenId> schedule, TokenId eos)
      : prompt_length_(prompt_length), schedule_(std::move(schedule)), eos_(eos) {
    SplitMix64 rng(derive_seed(seed, "toy_lm"));
    transform_ = Linear::seeded(hidden_dim, hidden_dim, rng);
    embeddings_ = seeded_uniform(static_cast<Eigen::Index>(vocab_size), hidden_dim, rng, 1.0);
  }

  Eigen::Index hidden_dim() const override { return transform_.in_dim(); }

  StepOutput step(const Matrix& prefix) const override {
    require_cols(prefix, hidden_dim(), "ToyLM prefix");
    if (prefix.rows() < prompt_length_) throw DimensionMismatch("prefix shorter than prompt");
    StepOutput out;
    out.hidden = transform_(Matrix(prefix.colwise().mean()));
    out.logits = out.hidden * embeddings_.transpose();
    const auto pos = static_cast<std::size_t>(prefix.rows() - prompt_length_);
    out.next = pos < schedule_.size() ? schedule_[pos] : eos_;
    return out;
  }

  RowVector embed(TokenId token) const override { return embeddings_.row(token); }

  const Linear& transform() const { return transform_; }

 private:
  Linear transform_;
  Matrix embeddings_;
  Eigen::Index prompt_length_;
  std::vector<TokenId> schedule_;
  TokenId eos_;
};

struct AggregationTrace {
  Matrix prefix;                   // multimodal input x_m
  std::vector<TokenId> tokens;     // generated tokens, including a final [EOS]
  Matrix inputs;                   // embedding fed back at each response position
  Matrix logits;                   // logits of the step that produced each token
  int det_position = -1;
  int emb_position = -1;
  RowVector aggregated_context;    // hidden after consuming the context query
  std::vector<bool> loss_mask;
};

// Greedy decoding with context-query substitution. When [EMB] is emitted
// (necessarily right after [DET]) the context query is fed in place of its
// word embedding, and the hidden state produced from that input is the
// aggregated context. At most max_steps calls to lm.step are made.
inline AggregationTrace run_aggregation(const LanguageModel& lm, const Vocabulary& vocab,
                                        const Matrix& multimodal_input,
                                        const RowVector& context_query, int max_steps) {
  if (max_steps < 2) throw ValidationError("max_steps must be at least 2");
  require_cols(multimodal_input, lm.hidden_dim(), "multimodal input");
  if (context_query.cols() != lm.hidden_dim()) {
    throw DimensionMismatch("context query dimension differs from LM hidden size");
  }
  AggregationTrace trace;
  trace.prefix = multimodal_input;
  Matrix seq = multimodal_input;
  std::vector<RowVector> fed;
  std::vector<RowVector> logits;
  int steps = 0;
  bool captured = false;

  StepOutput out = lm.step(seq);
  ++steps;
  while (true) {
    const TokenId tok = out.next;
    const int pos = static_cast<int>(trace.tokens.size());
    const bool after_det = !trace.tokens.empty() && trace.tokens.back() == vocab.det_id();
    trace.tokens.push_back(tok);
    logits.push_back(out.logits);

    if (after_det && tok != vocab.emb_id()) {
      throw ProtocolError("[DET] must be followed by [EMB]", "token " + std::to_string(pos));
    }
    if (tok == vocab.emb_id() && !after_det) {
      throw ProtocolError("[EMB] without a preceding [DET]", "token " + std::to_string(pos));
    }
    if (tok == vocab.det_id() && trace.det_position >= 0) {
      throw ProtocolError("second [DET] after a completed pair", "token " + std::to_string(pos));
    }
    if (tok == vocab.eos_id()) {
      if (!captured) throw ProtocolError("response ended without a [DET] [EMB] pair");
      break;
    }
    if (tok == vocab.det_id()) trace.det_position = pos;

    const RowVector input = tok == vocab.emb_id() ? context_query : lm.embed(tok);
    fed.push_back(input);
    seq.conservativeResize(seq.rows() + 1, Eigen::NoChange);
    seq.row(seq.rows() - 1) = input;

    if (steps == max_steps) {
      if (captured) break;
      throw Truncated("max_steps reached before the [DET] [EMB] pair completed");
    }
    out = lm.step(seq);
    ++steps;
    if (tok == vocab.emb_id()) {
      trace.emb_position = pos;
      trace.aggregated_context = out.hidden;
      captured = true;
    }
  }

  trace.inputs.resize(static_cast<Eigen::Index>(fed.size()), lm.hidden_dim());
  for (std::size_t i = 0; i < fed.size(); ++i) trace.inputs.row(static_cast<Eigen::Index>(i)) = fed[i];
  const Eigen::Index vocab_cols = logits.empty() ? 0 : logits.front().cols();
  trace.logits.resize(static_cast<Eigen::Index>(logits.size()), vocab_cols);
  for (std::size_t i = 0; i < logits.size(); ++i) trace.logits.row(static_cast<Eigen::Index>(i)) = logits[i];
  trace.loss_mask.assign(trace.tokens.size(), true);
  trace.loss_mask[static_cast<std::size_t>(trace.emb_position)] = false;
  return trace;
}

// false exactly at the [EMB] position. Rejects [EMB] without [DET], [DET]
// not followed by [EMB], and more than one pair.
inline std::vector<bool> build_loss_mask(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::vector<bool> mask(tokens.size(), true);
  bool paired = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == vocab.det_id()) {
      if (paired) throw ProtocolError("more than one [DET] [EMB] pair", "token " + std::to_string(i));
      if (i + 1 >= tokens.size() || tokens[i + 1] != vocab.emb_id()) {
        throw ProtocolError("[DET] must be followed by [EMB]", "token " + std::to_string(i));
      }
    } else if (tokens[i] == vocab.emb_id()) {
      if (i == 0 || tokens[i - 1] != vocab.det_id()) {
        throw ProtocolError("[EMB] without a preceding [DET]", "token " + std::to_string(i));
      }
      mask[i] = false;
      paired = true;
    }
  }
  return mask;
}

inline RowVector seeded_context_query(std::uint64_t seed, Eigen::Index dim) {
  SplitMix64 rng(derive_seed(seed, "context_query"));
  return seeded_uniform(1, dim, rng, 1.0);
}

// Random well-formed response: words, [DET] [EMB], optional trailing words.
inline std::vector<TokenId> random_response_schedule(SplitMix64& rng, const Vocabulary& vocab) {
  std::vector<TokenId> out;
  // Ordinary words live in [2, det_id): skip [UNK] and [EOS].
  const auto pick = [&] { return static_cast<TokenId>(2 + rng.below(static_cast<std::uint64_t>(vocab.det_id() - 2))); };
  const auto lead = 1 + rng.below(6);
  for (std::uint64_t i = 0; i < lead; ++i) out.push_back(pick());
  out.push_back(vocab.det_id());
  out.push_back(vocab.emb_id());
  const auto tail = rng.below(4);
  for (std::uint64_t i = 0; i < tail; ++i) out.push_back(pick());
  out.push_back(vocab.eos_id());
  return out;
}

inline Json to_json(const AggregationTrace& trace, const Vocabulary& vocab) {
  Json mask = Json::array();
  for (const bool b : trace.loss_mask) mask.push_back(b ? 1 : 0);
  Json ctx = Json::array();
  for (Eigen::Index i = 0; i < trace.aggregated_context.cols(); ++i) ctx.push_back(trace.aggregated_context(i));
  return Json{{"tokens", vocab.decode(trace.tokens)},
              {"det_position", trace.det_position},
              {"loss_mask", std::move(mask)},
              {"aggregated_context", std::move(ctx)}};
}

}  // namespace nugr
