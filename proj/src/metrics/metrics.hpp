#ifndef DREAMPAST_METRICS_HPP
#define DREAMPAST_METRICS_HPP

#include <cstdint>
#include <map>
#include <vector>

#include "util/jsonio.hpp"

namespace dreampast {

// square confusion matrix over channel indices; rows = ground truth,
// columns = prediction
class ConfusionMatrix {
  public:
    explicit ConfusionMatrix(int k) : k_(k), m_(size_t(k) * k, 0) {}

    int num_classes() const { return k_; }
    void add(int gt, int pred, int64_t n = 1) { m_[size_t(gt) * k_ + pred] += n; }
    int64_t at(int gt, int pred) const { return m_[size_t(gt) * k_ + pred]; }
    void merge(const ConfusionMatrix& o);
    int64_t total() const;

  private:
    int k_;
    std::vector<int64_t> m_;
};

struct ClassIou {
    double iou = 0.0;
    bool valid = false;  // false when TP+FP+FN == 0 (class absent from gt and pred)
};

// per-class intersection-over-union; absent classes are flagged invalid
// rather than scored zero
std::vector<ClassIou> iou_scores(const ConfusionMatrix& cm);

// mean over the valid entries of `group` (channel indices); 0 when none are valid
double mean_iou(const std::vector<ClassIou>& scores, const std::vector<int>& group);

// harmonic mean 2ab/(a+b), defined as 0 when both inputs are 0
double hiou(double base, double novel);

// one evaluation record, serialized as a JSON line per step
struct MetricsRecord {
    int step = 0;
    std::map<int, double> per_class_iou;  // class id -> IoU, valid classes only
    double miou_base = 0.0;
    double miou_novel = 0.0;
    double miou_all = 0.0;
    double hiou = 0.0;
    int64_t pixels = 0;

    json to_json() const;
    static MetricsRecord from_json(const json& j);
};

// Assemble the record for one step. `class_ids` maps channel index ->
// class id; `base` / `novel` are channel index groups. The background
// channel joins the base group when `bg_in_base` is set (the default
// grouping used in reports); `all` always includes every channel.
MetricsRecord make_record(int step, const ConfusionMatrix& cm,
                          const std::vector<int>& class_ids,
                          std::vector<int> base, const std::vector<int>& novel,
                          int bg_channel = 0, bool bg_in_base = true);

}  // namespace dreampast

#endif
