// SPDX-License-Identifier: Apache-2.0

#include "newsrec/train_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace newsrec::train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::string> recent_history(const std::vector<std::string>& history, int history_len) {
    const std::size_t keep = std::min(history.size(), static_cast<std::size_t>(history_len));
    return {history.end() - static_cast<long>(keep), history.end()};
}

bool all_known(const text::NewsCorpus& corpus, const mind::Impression& imp) {
    for (const auto& id : imp.history) {
        if (corpus.find(id) == nullptr) return false;
    }
    for (const auto& c : imp.candidates) {
        if (corpus.find(c.news_id) == nullptr) return false;
    }
    return true;
}

// Builds the batch's news vectors: each distinct article is encoded once and
// shared by every sample that references it.
class BatchNewsTable {
public:
    BatchNewsTable(const model::NewsEncoder& encoder, const text::NewsCorpus& corpus,
                   std::unordered_map<std::string, ag::Tensor>* frozen_states)
        : encoder_(encoder), corpus_(corpus), frozen_states_(frozen_states) {}

    ag::Index index_of(const std::string& id) {
        auto [it, inserted] = rows_.emplace(id, static_cast<ag::Index>(vectors_.size()));
        if (inserted) {
            vectors_.push_back(encode(id));
        }
        return it->second;
    }

    ag::Tensor stacked() const { return ag::concat_rows(vectors_); }

private:
    ag::Tensor encode(const std::string& id) {
        const auto* tokens = corpus_.find(id);
        if (tokens == nullptr) {
            throw TrainingError("news id " + id + " missing from corpus");
        }
        if (frozen_states_ == nullptr) {
            return encoder_.encode(*tokens);
        }
        auto it = frozen_states_->find(id);
        if (it == frozen_states_->end()) {
            ag::NoGradGuard no_grad;
            it = frozen_states_->emplace(id, encoder_.plm_states(*tokens)).first;
        }
        return encoder_.pool(it->second).pooled;
    }

    const model::NewsEncoder& encoder_;
    const text::NewsCorpus& corpus_;
    std::unordered_map<std::string, ag::Tensor>* frozen_states_;
    std::unordered_map<std::string, ag::Index> rows_;
    std::vector<ag::Tensor> vectors_;
};

}  // namespace

// ---- sampling ---------------------------------------------------------------------

std::vector<TrainingSample> build_training_samples(const mind::Impression& impression, int k_negatives,
                                                   int history_len, std::mt19937_64& rng, SamplingStats* stats) {
    if (k_negatives < 1 || history_len < 1) {
        throw std::invalid_argument("k_negatives and history_len must be >= 1");
    }
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
    for (const auto& c : impression.candidates) {
        (c.label == 1 ? positives : negatives).push_back(c.news_id);
    }
    if (stats != nullptr) {
        ++stats->impressions;
    }
    std::vector<TrainingSample> samples;
    if (negatives.empty()) {
        if (stats != nullptr && !positives.empty()) {
            ++stats->skipped_no_negative;
        }
        return samples;
    }
    const auto history = recent_history(impression.history, history_len);
    const auto k = static_cast<std::size_t>(k_negatives);
    for (const auto& pos : positives) {
        std::vector<std::string> drawn;
        drawn.reserve(k);
        if (negatives.size() >= k) {
            // Partial Fisher-Yates: the first k entries become a uniform sample.
            std::vector<std::string> pool = negatives;
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
                std::swap(pool[i], pool[pick(rng)]);
                drawn.push_back(pool[i]);
            }
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, negatives.size() - 1);
            for (std::size_t i = 0; i < k; ++i) {
                drawn.push_back(negatives[pick(rng)]);
            }
        }
        TrainingSample s;
        s.user_id = impression.user_id;
        s.history = history;
        s.candidates.reserve(k + 1);
        s.candidates.push_back(pos);
        s.candidates.insert(s.candidates.end(), drawn.begin(), drawn.end());
        // Shuffle positions and track where the click lands.
        std::vector<std::size_t> perm(s.candidates.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::string> shuffled(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) {
            shuffled[i] = s.candidates[perm[i]];
            if (perm[i] == 0) s.label_index = i;
        }
        s.candidates = std::move(shuffled);
        samples.push_back(std::move(s));
    }
    if (stats != nullptr) {
        stats->samples += samples.size();
    }
    return samples;
}

// ---- loss -----------------------------------------------------------------------

double ranking_softmax_loss(std::span<const double> scores, std::size_t label_index) {
    if (label_index >= scores.size()) {
        throw std::out_of_range("label index out of range");
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (double s : scores) {
        total += std::exp(s - mx);
    }
    return std::log(total) + mx - scores[label_index];
}

std::vector<double> ranking_softmax_loss_gradient(std::span<const double> scores, std::size_t label_index) {
    if (label_index >= scores.size()) {
        throw std::out_of_range("label index out of range");
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> grad(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        grad[i] = std::exp(scores[i] - mx);
        total += grad[i];
    }
    for (auto& g : grad) {
        g /= total;
    }
    grad[label_index] -= 1.0;
    return grad;
}

// ---- optimiser ---------------------------------------------------------------------

AdamW::AdamW(ag::ParameterList params, Options options) : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
        m_.push_back(ag::Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
        v_.push_back(ag::Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
}

void AdamW::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].tensor;
        const ag::Matrix& g = p.grad();
        if (g.size() == 0) {
            continue;
        }
        ag::Matrix& w = p.mutable_value();
        w *= 1.0 - options_.lr * options_.weight_decay;
        m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
        v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
        w.array() -= options_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + options_.eps);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) {
        p.tensor.zero_grad();
    }
}

double clip_grad_norm(const ag::ParameterList& params, double max_norm) {
    const double norm = ag::global_grad_norm(params);
    if (std::isfinite(norm) && norm > max_norm) {
        const double factor = max_norm / (norm + 1e-6);
        for (auto p : params) {
            if (p.tensor.grad().size() != 0) {
                p.tensor.mutable_grad() *= factor;
            }
        }
    }
    return norm;
}

// ---- reports ------------------------------------------------------------------------

nlohmann::json EpochRecord::to_json() const {
    return {{"epoch", epoch},
            {"mean_loss", mean_loss},
            {"samples", samples},
            {"batches", batches},
            {"wall_seconds", wall_seconds}};
}

std::vector<double> TrainReport::losses() const {
    std::vector<double> out;
    for (const auto& e : epochs) out.push_back(e.mean_loss);
    return out;
}

std::vector<nlohmann::json> TrainReport::json_lines() const {
    std::vector<nlohmann::json> lines;
    for (const auto& e : epochs) {
        auto j = e.to_json();
        j["seed"] = seed;
        j["optimizer"] = {{"name", "adamw"},
                          {"lr", optimizer.lr},
                          {"beta1", optimizer.beta1},
                          {"beta2", optimizer.beta2},
                          {"eps", optimizer.eps},
                          {"weight_decay", optimizer.weight_decay},
                          {"lr_schedule", "constant"}};
        j["grad_clip_norm"] = clip_norm;
        j["skipped_no_negative"] = sampling.skipped_no_negative;
        j["skipped_unknown_news"] = sampling.skipped_unknown_news;
        lines.push_back(std::move(j));
    }
    return lines;
}

// ---- training -------------------------------------------------------------------------

text::NewsCorpus corpus_for(const model::RecModel& model, const std::vector<mind::NewsArticle>& articles,
                            const describe::DescriptionCache* cache) {
    return text::build_corpus(articles, model.config().mode, cache, model.tokenizer(), model.config().max_len());
}

TrainResult train(const ModelConfig& config, const std::vector<mind::NewsArticle>& articles,
                  const std::vector<mind::Impression>& impressions, const describe::DescriptionCache* cache,
                  const TrainOptions& options) {
    config.validate();
    if (impressions.empty()) {
        throw TrainingError("empty training set: no impressions");
    }
    const auto texts = text::compose_all(articles, config.mode, cache, text::WordPieceTokenizer::kSep);
    auto tokenizer = model::make_tokenizer(config, texts);
    auto model = model::RecModel::create(config, std::move(tokenizer), model::UserVocab::build(impressions));
    const auto corpus = corpus_for(model, articles, cache);
    auto report = train_model(model, corpus, impressions, options);
    return TrainResult{std::move(model), std::move(report)};
}

TrainReport train_model(model::RecModel& model, const text::NewsCorpus& corpus,
                        const std::vector<mind::Impression>& impressions, const TrainOptions& options) {
    const ModelConfig& config = model.config();
    config.validate();
    if (corpus.mode != config.mode || corpus.max_len != config.max_len()) {
        throw TrainingError("corpus was built for a different mode or max_len than the model");
    }

    TrainReport report;
    report.seed = config.seed;
    report.optimizer = {config.lr, config.beta1, config.beta2, config.adam_eps, config.weight_decay};
    report.clip_norm = config.clip_norm;

    const auto params = model.trainable_parameters();
    AdamW optimizer(params, report.optimizer);
    // Separate stream from parameter initialisation.
    std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
    std::unordered_map<std::string, ag::Tensor> frozen_states;
    auto* frozen = config.freeze_encoder ? &frozen_states : nullptr;

    std::vector<const mind::Impression*> usable;
    for (const auto& imp : impressions) {
        if (all_known(corpus, imp)) {
            usable.push_back(&imp);
        } else {
            ++report.sampling.skipped_unknown_news;
        }
    }

    std::ofstream report_file;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        report_file.open(*options.out_dir / "train_report.jsonl", std::ios::trunc);
    }

    const auto run_start = Clock::now();
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto epoch_start = Clock::now();
        SamplingStats stats;
        std::vector<TrainingSample> samples;
        for (const auto* imp : usable) {
            auto s = build_training_samples(*imp, config.k_negatives, config.history_len, rng, &stats);
            samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
        }
        if (samples.empty()) {
            throw TrainingError("empty training set: no impression has both a click and a non-click");
        }
        std::shuffle(samples.begin(), samples.end(), rng);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        const auto batch_size = static_cast<std::size_t>(config.batch_size);
        for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
            const std::size_t end = std::min(samples.size(), begin + batch_size);
            BatchNewsTable table(model.news_encoder(), corpus, frozen);
            std::vector<std::vector<ag::Index>> history_rows(end - begin);
            std::vector<std::vector<ag::Index>> candidate_rows(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                for (const auto& id : samples[i].history) history_rows[i - begin].push_back(table.index_of(id));
                for (const auto& id : samples[i].candidates) candidate_rows[i - begin].push_back(table.index_of(id));
            }
            const ag::Tensor news = table.stacked();
            std::vector<ag::Tensor> losses;
            losses.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                const auto& hist = history_rows[i - begin];
                const ag::Tensor history = hist.empty() ? ag::Tensor{} : ag::gather_rows(news, hist);
                const auto user =
                    model.user_encoder().encode(history, model.users().index_of(samples[i].user_id)).vector;
                const ag::Tensor scores =
                    model::score_candidates(user, ag::gather_rows(news, candidate_rows[i - begin]));
                losses.push_back(ag::softmax_cross_entropy(scores, static_cast<ag::Index>(samples[i].label_index)));
            }
            const ag::Tensor loss = ag::mean_of(losses);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << batches << " (lr " << config.lr << ")";
                throw TrainingError(msg.str());
            }
            loss.backward();
            const double norm = clip_grad_norm(params, config.clip_norm);
            if (!std::isfinite(norm)) {
                std::ostringstream msg;
                msg << "non-finite gradient at epoch " << epoch << ", batch " << batches << " (lr " << config.lr << ")";
                throw TrainingError(msg.str());
            }
            optimizer.step();
            optimizer.zero_grad();
            loss_sum += value * static_cast<double>(end - begin);
            ++batches;
        }

        EpochRecord record;
        record.epoch = epoch;
        record.samples = samples.size();
        record.batches = batches;
        record.mean_loss = loss_sum / static_cast<double>(samples.size());
        record.wall_seconds = seconds_since(epoch_start);
        report.epochs.push_back(record);
        report.sample_count += samples.size();
        report.sampling.impressions = stats.impressions;
        report.sampling.samples = stats.samples;
        report.sampling.skipped_no_negative = stats.skipped_no_negative;

        if (options.out_dir) {
            model::save_checkpoint(model, *options.out_dir / ("epoch-" + std::to_string(epoch)));
            report_file << report.json_lines().back().dump() << "\n" << std::flush;
        }
        if (options.on_epoch) {
            options.on_epoch(record);
        }
    }
    report.wall_seconds = seconds_since(run_start);
    if (options.out_dir) {
        model::save_checkpoint(model, *options.out_dir / "final");
    }
    return report;
}

// ---- evaluation -------------------------------------------------------------------------

std::vector<std::vector<double>> score_impressions(const model::RecModel& model,
                                                   const std::vector<mind::Impression>& impressions,
                                                   const text::NewsCorpus& corpus, bool cache_news_vectors) {
    if (corpus.mode != model.config().mode || corpus.max_len != model.config().max_len()) {
        throw std::invalid_argument("corpus was built for a different mode or max_len than the model");
    }
    ag::NoGradGuard no_grad;
    std::unordered_map<std::string, ag::RowVector> cache;
    auto vector_of = [&](const std::string& id) -> ag::RowVector {
        if (cache_news_vectors) {
            auto it = cache.find(id);
            if (it != cache.end()) return it->second;
        }
        ag::RowVector v = model.news_encoder().encode(*corpus.find(id)).value().row(0);
        if (cache_news_vectors) cache.emplace(id, v);
        return v;
    };

    std::vector<std::vector<double>> all_scores;
    all_scores.reserve(impressions.size());
    const int history_len = model.config().history_len;
    for (const auto& imp : impressions) {
        if (!all_known(corpus, imp)) {
            all_scores.emplace_back();
            continue;
        }
        const auto hist = recent_history(imp.history, history_len);
        ag::Tensor history;
        if (!hist.empty()) {
            ag::Matrix h(static_cast<ag::Index>(hist.size()), model.config().d_news);
            for (std::size_t i = 0; i < hist.size(); ++i) {
                h.row(static_cast<ag::Index>(i)) = vector_of(hist[i]);
            }
            history = ag::Tensor::constant(std::move(h));
        }
        const ag::RowVector user =
            model.user_encoder().encode(history, model.users().index_of(imp.user_id)).vector.value().row(0);
        std::vector<double> scores;
        scores.reserve(imp.candidates.size());
        for (const auto& c : imp.candidates) {
            const ag::RowVector v = vector_of(c.news_id);
            scores.push_back(model::score({user.data(), static_cast<std::size_t>(user.size())},
                                          {v.data(), static_cast<std::size_t>(v.size())}));
        }
        all_scores.push_back(std::move(scores));
    }
    return all_scores;
}

metrics::MetricReport evaluate(const model::RecModel& model, const std::vector<mind::Impression>& impressions,
                               const text::NewsCorpus& corpus) {
    const auto all_scores = score_impressions(model, impressions, corpus);
    metrics::MetricAccumulator acc;
    for (std::size_t i = 0; i < impressions.size(); ++i) {
        if (all_scores[i].empty()) {
            acc.skip_unknown_news();
            continue;
        }
        std::vector<int> labels;
        for (const auto& c : impressions[i].candidates) labels.push_back(c.label);
        acc.add(labels, all_scores[i]);
    }
    return acc.report();
}

}  // namespace newsrec::train
