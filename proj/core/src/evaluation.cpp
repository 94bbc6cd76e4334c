#include "paradiff/evaluation.hpp"

#include "paradiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace paradiff {

namespace {

void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError(std::string("joint: ") + name + " outside [0, 1]");
}

Vector centroid(const std::vector<Vector>& vs) {
    Vector c = Vector::Zero(vs.front().size());
    for (const auto& v : vs) {
        if (v.size() != c.size()) throw ContractError("confusion: embedding sizes differ");
        c += v;
    }
    return c / static_cast<double>(vs.size());
}

double cosine_distance(const Vector& a, const Vector& b) {
    const double na = a.norm(), nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("confusion: zero-norm embedding");
    return 1.0 - a.dot(b) / (na * nb);
}

std::vector<Vector> embed_all(const std::vector<TokenSequence>& texts, const StyleModel& m) {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(m.style_vector(t));
    return out;
}

double cosine_similarity(const Vector& a, const Vector& b) { return 1.0 - cosine_distance(a, b); }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

double joint(double accuracy, double similarity, double fluency) {
    check_unit(accuracy, "accuracy");
    check_unit(similarity, "similarity");
    check_unit(fluency, "fluency");
    return std::cbrt(accuracy * similarity * fluency);
}

int confusion(const Vector& output, const std::vector<Vector>& source_exemplars,
              const std::vector<Vector>& target_exemplars) {
    if (source_exemplars.empty() || target_exemplars.empty()) throw ContractError("confusion: empty exemplar set");
    const double to_target = cosine_distance(output, centroid(target_exemplars));
    const double to_source = cosine_distance(output, centroid(source_exemplars));
    return to_target < to_source ? 1 : 0;
}

int confusion(const TokenSequence& output, const std::vector<TokenSequence>& source_exemplars,
              const std::vector<TokenSequence>& target_exemplars, const StyleModel& embedder) {
    if (source_exemplars.empty() || target_exemplars.empty()) throw ContractError("confusion: empty exemplar set");
    return confusion(embedder.style_vector(output), embed_all(source_exemplars, embedder),
                     embed_all(target_exemplars, embedder));
}

double content_f1(const TokenSequence& output, const TokenSequence& source, const Vocabulary& vocab) {
    const std::vector<int> a = content_classes(output, vocab);
    const std::vector<int> b = content_classes(source, vocab);
    if (a.empty() && b.empty()) return 1.0;
    if (a.empty() || b.empty()) return 0.0;
    std::vector<int> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    if (common.empty()) return 0.0;
    const double precision = static_cast<double>(common.size()) / static_cast<double>(a.size());
    const double recall = static_cast<double>(common.size()) / static_cast<double>(b.size());
    return 2.0 * precision * recall / (precision + recall);
}

MetricMeans mean_scores(const std::vector<RecordScores>& scores) {
    MetricMeans m;
    m.count = static_cast<long>(scores.size());
    if (scores.empty()) return m;
    double conf = 0.0;
    long conf_n = 0;
    for (const auto& s : scores) {
        m.internal_acc += s.internal_acc;
        m.external_acc += s.external_acc;
        m.similarity += s.similarity;
        m.fluency += s.fluency;
        m.joint += s.joint;
        m.internal_target_score += s.internal_target_score;
        if (s.confusion) {
            conf += *s.confusion;
            ++conf_n;
        }
    }
    const double n = static_cast<double>(scores.size());
    m.internal_acc /= n;
    m.external_acc /= n;
    m.similarity /= n;
    m.fluency /= n;
    m.joint /= n;
    m.internal_target_score /= n;
    if (conf_n > 0) m.confusion = conf / static_cast<double>(conf_n);
    return m;
}

Json to_json(const RecordScores& s) {
    Json j{{"item", s.item},
           {"direction", s.direction},
           {"internal_acc", s.internal_acc},
           {"external_acc", s.external_acc},
           {"similarity", s.similarity},
           {"fluency", s.fluency},
           {"joint", s.joint},
           {"internal_target_score", s.internal_target_score},
           {"error", s.error}};
    if (s.confusion) j["confusion"] = *s.confusion;
    return j;
}

Json to_json(const MetricMeans& m) {
    Json j{{"count", m.count},
           {"internal_acc", m.internal_acc},
           {"external_acc", m.external_acc},
           {"similarity", m.similarity},
           {"fluency", m.fluency},
           {"joint", m.joint},
           {"internal_target_score", m.internal_target_score}};
    if (m.confusion) j["confusion"] = *m.confusion;
    return j;
}

Json to_json(const EvalReport& r) {
    Json dirs = Json::object();
    for (const auto& [d, m] : r.by_direction) dirs[d] = to_json(m);
    Json recs = Json::array();
    for (const auto& s : r.records) recs.push_back(to_json(s));
    return Json{{"mode", std::string(to_string(r.mode))},
                {"lambda", r.lambda},
                {"overall", to_json(r.overall)},
                {"by_direction", dirs},
                {"errors", r.errors},
                {"run", r.run},
                {"records", recs}};
}

EvalReport evaluate(const std::vector<TransferRecord>& records, const std::vector<TransferRequest>& requests,
                    GuidanceMode mode, const EvalModels& models) {
    if (!models.similarity || !models.fluency) throw DependencyError("evaluation needs similarity and fluency scorers");
    if (mode == GuidanceMode::style) {
        if (!models.internal_embedder || !models.external_embedder) {
            throw DependencyError("style evaluation needs internal and external style embedders");
        }
    } else if (!models.internal_classifier || !models.external_classifier) {
        throw DependencyError("attribute evaluation needs internal and external classifiers");
    }
    if (!models.internal_provenance || !models.external_provenance) {
        throw ContractError("evaluation: internal and external model provenance must be given");
    }
    check_disjoint(*models.internal_provenance, *models.external_provenance);

    EvalReport report;
    report.mode = mode;
    if (!records.empty()) report.lambda = records.front().lambda;
    std::map<std::string, std::vector<RecordScores>> groups;
    for (const auto& rec : records) {
        if (rec.item < 0 || static_cast<std::size_t>(rec.item) >= requests.size()) {
            throw ContractError("evaluation: record item " + std::to_string(rec.item) + " has no request");
        }
        const TransferRequest& req = requests[static_cast<std::size_t>(rec.item)];
        if (req.source != rec.source) {
            throw ContractError("evaluation: record item " + std::to_string(rec.item) + " source differs from its request");
        }
        RecordScores s;
        s.item = rec.item;
        s.direction = req.direction;
        if (rec.empty_output) {
            s.error = true;
            ++report.errors;
            if (mode == GuidanceMode::style) s.confusion = 0.0;
        } else if (mode == GuidanceMode::style) {
            const Vector out_int = models.internal_embedder->style_vector(rec.output);
            const auto src_int = embed_all(req.source_exemplars, *models.internal_embedder);
            const auto tgt_int = embed_all(req.target_exemplars, *models.internal_embedder);
            s.internal_acc = confusion(out_int, src_int, tgt_int);
            s.internal_target_score = cosine_similarity(out_int, centroid(tgt_int));
            s.external_acc = confusion(rec.output, req.source_exemplars, req.target_exemplars, *models.external_embedder);
            s.confusion = s.external_acc;
        } else {
            const Vector p_int = models.internal_classifier->class_probs(rec.output);
            Eigen::Index arg = 0;
            p_int.maxCoeff(&arg);
            s.internal_acc = arg == req.target_class ? 1.0 : 0.0;
            s.internal_target_score = p_int(req.target_class);
            const Vector p_ext = models.external_classifier->class_probs(rec.output);
            p_ext.maxCoeff(&arg);
            s.external_acc = arg == req.target_class ? 1.0 : 0.0;
        }
        if (!rec.empty_output) {
            s.similarity = std::clamp(models.similarity->score(rec.output, rec.source), 0.0, 1.0);
            s.fluency = std::clamp(models.fluency->score(rec.output), 0.0, 1.0);
            s.joint = joint(s.external_acc, s.similarity, s.fluency);
        }
        groups[s.direction].push_back(s);
        report.records.push_back(s);
    }
    report.overall = mean_scores(report.records);
    for (const auto& [d, g] : groups) report.by_direction[d] = mean_scores(g);
    return report;
}

SweepResult sweep(const std::vector<double>& lambdas, const std::vector<TransferRequest>& requests,
                  const TransferConfig& cfg, const DenoiserCheckpoint& checkpoint, const Paraphraser& paraphraser,
                  const GuidanceModels& guidance, const EvalModels& eval) {
    if (lambdas.size() < 2) throw ConfigError("sweep needs at least two lambda values");
    SweepResult result;
    for (double lambda : lambdas) {
        TransferConfig c = cfg;
        c.guidance.lambda = lambda;
        auto records = transfer_batch(requests, c, checkpoint, paraphraser, guidance);
        EvalReport report = evaluate(records, requests, cfg.guidance.mode, eval);
        report.lambda = lambda;
        result.rows.push_back({lambda, std::move(report)});
        result.transfers.push_back(std::move(records));
    }
    return result;
}

std::string sweep_csv(const SweepResult& result) {
    const bool with_conf = !result.rows.empty() && result.rows.front().report.overall.confusion.has_value();
    std::ostringstream os;
    os.precision(17);
    os << "lambda,acc_int,acc_ext,sim,flu,joint" << (with_conf ? ",confusion" : "") << "\n";
    for (const auto& row : result.rows) {
        const MetricMeans& m = row.report.overall;
        os << row.lambda << ',' << m.internal_acc << ',' << m.external_acc << ',' << m.similarity << ',' << m.fluency
           << ',' << m.joint;
        if (with_conf) os << ',' << m.confusion.value_or(0.0);
        os << "\n";
    }
    return os.str();
}

Json sweep_json(const SweepResult& result) {
    Json rows = Json::array();
    for (const auto& row : result.rows) {
        Json r = to_json(row.report);
        r.erase("records");
        rows.push_back(r);
    }
    return Json{{"rows", rows}};
}

std::string sweep_svg(const SweepResult& result) {
    constexpr double W = 640, H = 400, left = 60, right = 150, top = 20, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;
    double lo = result.rows.empty() ? 0.0 : result.rows.front().lambda, hi = lo;
    for (const auto& r : result.rows) {
        lo = std::min(lo, r.lambda);
        hi = std::max(hi, r.lambda);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    auto X = [&](double l) { return left + (l - lo) / span * pw; };
    auto Y = [&](double v) { return top + (1.0 - v) * ph; };

    struct Series {
        const char* name;
        const char* color;
        double (*get)(const MetricMeans&);
    };
    std::vector<Series> series{
        {"acc_int", "#1f77b4", [](const MetricMeans& m) { return m.internal_acc; }},
        {"acc_ext", "#ff7f0e", [](const MetricMeans& m) { return m.external_acc; }},
        {"sim", "#2ca02c", [](const MetricMeans& m) { return m.similarity; }},
        {"flu", "#d62728", [](const MetricMeans& m) { return m.fluency; }},
        {"joint", "#9467bd", [](const MetricMeans& m) { return m.joint; }},
    };
    if (!result.rows.empty() && result.rows.front().report.overall.confusion) {
        series.push_back({"confusion", "#8c564b", [](const MetricMeans& m) { return m.confusion.value_or(0.0); }});
    }

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << Y(0) << "\" x2=\"" << left + pw << "\" y2=\"" << Y(0) << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << Y(0) << "\" x2=\"" << left << "\" y2=\"" << Y(1) << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = i / 4.0;
        os << "<text x=\"" << left - 8 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
    }
    for (const auto& r : result.rows) {
        os << "<text x=\"" << X(r.lambda) << "\" y=\"" << Y(0) + 18 << "\" text-anchor=\"middle\">" << fmt(r.lambda) << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">lambda</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        os << "<polyline fill=\"none\" stroke=\"" << series[s].color << "\" stroke-width=\"2\" points=\"";
        for (const auto& r : result.rows) os << X(r.lambda) << ',' << Y(series[s].get(r.report.overall)) << ' ';
        os << "\"/>\n";
        const double ly = top + 16.0 * static_cast<double>(s);
        os << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 35 << "\" y2=\"" << ly
           << "\" stroke=\"" << series[s].color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << left + pw + 40 << "\" y=\"" << ly + 4 << "\">" << series[s].name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ContractError("spearman: sizes differ");
    if (x.size() < 2) return 0.0;
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double sign_test_p(long wins, long losses) {
    if (wins < 0 || losses < 0) throw ContractError("sign_test_p: negative counts");
    const long n = wins + losses;
    if (n == 0) return 1.0;
    double p = 0.0;
    for (long k = wins; k <= n; ++k) {
        p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
    }
    return std::min(1.0, p);
}

}  // namespace paradiff
