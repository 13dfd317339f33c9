#include <cmath>
#include <numbers>

#include "gct/signal.hpp"
#include "gct/text.hpp"

namespace gct {

namespace {

std::string embedding_token(const Word& w) {
  auto n = normalize_token(w.token);
  return n.empty() ? to_lower(w.token) : n;
}

}  // namespace

namespace {

Vector gaussian_hash(std::uint64_t seed, std::string_view text, int dim) {
  std::uint64_t state = fnv1a64(text, fnv1a64(std::to_string(seed)));
  Vector v(dim);
  for (int i = 0; i < dim; i += 2) {
    // Box-Muller pair
    const double r = std::sqrt(-2.0 * std::log(uniform01(state)));
    const double theta = 2.0 * std::numbers::pi * uniform01(state);
    v(i) = r * std::cos(theta);
    if (i + 1 < dim) v(i + 1) = r * std::sin(theta);
  }
  return v;
}

}  // namespace

HashedNgramExtractor::HashedNgramExtractor(std::uint64_t seed, int dim, int context, double shared)
    : seed_(seed), dim_(dim), context_(context), shared_(shared) {
  if (!(shared >= 0.0 && shared <= 1.0)) throw InvalidArgument("hashed extractor needs shared in [0, 1]");
  if (dim < 8) throw InvalidArgument("hashed extractor needs dim >= 8");
  if (context < 1) throw InvalidArgument("hashed extractor needs context >= 1");
}

std::string HashedNgramExtractor::id() const {
  return "hashed-ngram:seed=" + std::to_string(seed_) + ",dim=" + std::to_string(dim_) +
         ",context=" + std::to_string(context_) + (shared_ > 0 ? ",shared=" + format_double(shared_) : "");
}

Vector HashedNgramExtractor::hash_embedding(std::string_view ngram_text) const {
  if (shared_ <= 0.0) return gaussian_hash(seed_, ngram_text, dim_);
  if (shared_ >= 1.0) return gaussian_hash(kSemanticSeed, ngram_text, dim_);
  return std::sqrt(shared_) * gaussian_hash(kSemanticSeed, ngram_text, dim_) +
         std::sqrt(1.0 - shared_) * gaussian_hash(seed_, ngram_text, dim_);
}

Matrix HashedNgramExtractor::embed(const Transcript& transcript) const {
  const auto& words = transcript.words();
  Matrix out(static_cast<Eigen::Index>(words.size()), dim_);
  std::vector<std::string> tokens;
  tokens.reserve(words.size());
  for (const auto& w : words) tokens.push_back(embedding_token(w));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Vector acc = Vector::Zero(dim_);
    std::string text;
    for (int n = 1; n <= context_ && static_cast<std::size_t>(n) <= i + 1; ++n) {
      text = n == 1 ? tokens[i] : tokens[i + 1 - n] + " " + text;
      acc += hash_embedding(text);
    }
    const double norm = acc.norm();
    out.row(static_cast<Eigen::Index>(i)) = (norm > 0 ? acc / norm : acc).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------

FileFeatureExtractor::FileFeatureExtractor(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_)) throw ExtractorError("feature directory " + dir_.string() + " does not exist");
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.path().extension() != ".gctf") continue;
    auto seq = load_word_features(entry.path());
    id_ = seq.extractor_id;
    dim_ = static_cast<int>(seq.rows.cols());
    break;
  }
  if (dim_ == 0) throw ExtractorError("no word-feature files in " + dir_.string());
}

Matrix FileFeatureExtractor::embed(const Transcript& transcript) const {
  auto path = dir_ / (transcript.story_id() + ".gctf");
  if (!std::filesystem::exists(path)) throw ExtractorError("no features for story '" + transcript.story_id() + "' in " + dir_.string());
  auto seq = load_word_features(path);
  if (seq.rows.rows() != static_cast<Eigen::Index>(transcript.size()))
    throw DimMismatch("feature file " + path.string() + " has " + std::to_string(seq.rows.rows()) + " rows for " +
                      std::to_string(transcript.size()) + " words");
  if (seq.rows.cols() != dim_) throw DimMismatch("feature file " + path.string() + " has inconsistent dim");
  return seq.rows;
}

// ---------------------------------------------------------------------------

Json ExtractorSpec::to_json() const {
  Json j{{"kind", kind}};
  if (kind == "hashed") {
    j["seed"] = seed;
    j["dim"] = dim;
    j["context"] = context;
    j["shared"] = shared;
  } else {
    j["dir"] = dir;
  }
  return j;
}

ExtractorSpec ExtractorSpec::from_json(const Json& j) {
  ExtractorSpec s;
  s.kind = j.value("kind", "hashed");
  s.seed = j.value("seed", std::uint64_t{0});
  s.dim = j.value("dim", 128);
  s.context = j.value("context", 3);
  s.shared = j.value("shared", 0.0);
  s.dir = j.value("dir", "");
  return s;
}

std::unique_ptr<FeatureExtractor> make_extractor(const ExtractorSpec& spec) {
  if (spec.kind == "hashed") return std::make_unique<HashedNgramExtractor>(spec.seed, spec.dim, spec.context, spec.shared);
  if (spec.kind == "file") return std::make_unique<FileFeatureExtractor>(spec.dir);
  throw ExtractorError("unknown extractor kind '" + spec.kind + "'");
}

std::unique_ptr<FeatureExtractor> hashed_ngram_extractor(std::uint64_t seed, int dim, int context, double shared) {
  return std::make_unique<HashedNgramExtractor>(seed, dim, context, shared);
}

WordFeatureSeq embed_words(const FeatureExtractor& extractor, const Transcript& transcript) {
  WordFeatureSeq seq;
  seq.story_id = transcript.story_id();
  seq.onsets = transcript.onsets();
  seq.extractor_id = extractor.id();
  try {
    seq.rows = extractor.embed(transcript);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ExtractorError(extractor.id() + ": " + e.what());
  }
  if (seq.rows.rows() != static_cast<Eigen::Index>(transcript.size()))
    throw DimMismatch("extractor returned " + std::to_string(seq.rows.rows()) + " rows for " +
                      std::to_string(transcript.size()) + " words");
  if (seq.rows.cols() != extractor.dim()) throw DimMismatch("extractor returned wrong feature dimension");
  if (!seq.rows.allFinite()) throw ExtractorError(extractor.id() + " produced non-finite features");
  return seq;
}

}  // namespace gct
