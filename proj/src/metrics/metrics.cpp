#include "metrics/metrics.hpp"

#include <algorithm>

#include "util/common.hpp"

namespace dreampast {

void ConfusionMatrix::merge(const ConfusionMatrix& o) {
    if (o.k_ != k_) throw RuntimeError("confusion matrix size mismatch");
    for (size_t i = 0; i < m_.size(); ++i) m_[i] += o.m_[i];
}

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (int64_t v : m_) t += v;
    return t;
}

std::vector<ClassIou> iou_scores(const ConfusionMatrix& cm) {
    int k = cm.num_classes();
    std::vector<int64_t> rowsum(k, 0), colsum(k, 0);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            rowsum[i] += cm.at(i, j);
            colsum[j] += cm.at(i, j);
        }
    std::vector<ClassIou> out(k);
    for (int c = 0; c < k; ++c) {
        int64_t tp = cm.at(c, c);
        int64_t denom = rowsum[c] + colsum[c] - tp;  // TP + FP + FN
        if (denom > 0) out[c] = {double(tp) / double(denom), true};
    }
    return out;
}

double mean_iou(const std::vector<ClassIou>& scores, const std::vector<int>& group) {
    double sum = 0.0;
    int n = 0;
    for (int c : group) {
        if (c < 0 || size_t(c) >= scores.size()) throw RuntimeError("group index out of range");
        if (scores[c].valid) {
            sum += scores[c].iou;
            ++n;
        }
    }
    return n ? sum / n : 0.0;
}

double hiou(double base, double novel) {
    if (base == 0.0 && novel == 0.0) return 0.0;
    return 2.0 * base * novel / (base + novel);
}

json MetricsRecord::to_json() const {
    json pc = json::object();
    for (const auto& [id, v] : per_class_iou) pc[std::to_string(id)] = v;
    return json{{"step", step},          {"per_class_iou", pc}, {"miou_base", miou_base},
                {"miou_novel", miou_novel}, {"miou_all", miou_all}, {"hiou", hiou},
                {"pixels", pixels}};
}

MetricsRecord MetricsRecord::from_json(const json& j) {
    MetricsRecord r;
    r.step = j.at("step").get<int>();
    for (auto it = j.at("per_class_iou").begin(); it != j.at("per_class_iou").end(); ++it)
        r.per_class_iou[std::stoi(it.key())] = it.value().get<double>();
    r.miou_base = j.at("miou_base").get<double>();
    r.miou_novel = j.at("miou_novel").get<double>();
    r.miou_all = j.at("miou_all").get<double>();
    r.hiou = j.at("hiou").get<double>();
    r.pixels = j.value("pixels", int64_t(0));
    return r;
}

MetricsRecord make_record(int step, const ConfusionMatrix& cm,
                          const std::vector<int>& class_ids,
                          std::vector<int> base, const std::vector<int>& novel,
                          int bg_channel, bool bg_in_base) {
    if (int(class_ids.size()) != cm.num_classes())
        throw RuntimeError("class id list does not match confusion matrix");
    auto scores = iou_scores(cm);

    if (bg_in_base && std::find(base.begin(), base.end(), bg_channel) == base.end())
        base.insert(base.begin(), bg_channel);

    std::vector<int> all(cm.num_classes());
    for (int i = 0; i < cm.num_classes(); ++i) all[i] = i;

    MetricsRecord r;
    r.step = step;
    for (int c = 0; c < cm.num_classes(); ++c)
        if (scores[c].valid) r.per_class_iou[class_ids[c]] = scores[c].iou;
    r.miou_base = mean_iou(scores, base);
    r.miou_novel = mean_iou(scores, novel);
    r.miou_all = mean_iou(scores, all);
    r.hiou = hiou(r.miou_base, r.miou_novel);
    r.pixels = cm.total();
    return r;
}

}  // namespace dreampast
