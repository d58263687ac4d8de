#include "segmenter/losses.hpp"

#include <cmath>

#include "util/common.hpp"

namespace dreampast {

LossConfig LossConfig::from_json(const json& j) {
    LossConfig c;
    c.lambda_ce = j.value("lambda_ce", c.lambda_ce);
    c.lambda_ali = j.value("lambda_ali", c.lambda_ali);
    c.lambda_kd = j.value("lambda_kd", c.lambda_kd);
    c.conf_threshold = j.value("conf_threshold", c.conf_threshold);
    c.use_pseudo_labels = j.value("use_pseudo_labels", c.use_pseudo_labels);
    return c;
}

json LossConfig::to_json() const {
    return json{{"lambda_ce", lambda_ce},
                {"lambda_ali", lambda_ali},
                {"lambda_kd", lambda_kd},
                {"conf_threshold", conf_threshold},
                {"use_pseudo_labels", use_pseudo_labels}};
}

namespace {

// stable softmax of one logits column
inline Vec softmax_col(const Mat& z, size_t j, int k) {
    Vec p(k);
    double mx = z(0, j);
    for (int c = 1; c < k; ++c) mx = std::max(mx, z(c, j));
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
        p[c] = std::exp(z(c, j) - mx);
        sum += p[c];
    }
    p /= sum;
    return p;
}

// softmax restricted to channels [lo, lo+k)
inline Vec softmax_slice(const Mat& z, size_t j, int lo, int k) {
    Vec p(k);
    double mx = z(lo, j);
    for (int c = 1; c < k; ++c) mx = std::max(mx, z(lo + c, j));
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
        p[c] = std::exp(z(lo + c, j) - mx);
        sum += p[c];
    }
    p /= sum;
    return p;
}

inline int argmax_col(const Mat& z, size_t j, int k) {
    int arg = 0;
    double best = z(0, j);
    for (int c = 1; c < k; ++c)
        if (z(c, j) > best) best = z(c, j), arg = c;  // first max wins ties
    return arg;
}

}  // namespace

PseudoLabels pseudo_label(const Mat& old_logits, const std::vector<uint8_t>& bg,
                          double conf_threshold) {
    size_t n = size_t(old_logits.cols());
    if (bg.size() != n) throw RuntimeError("pseudo_label: mask size mismatch");
    int k = int(old_logits.rows());

    PseudoLabels out;
    out.label.resize(n);
    out.conf.resize(n);
    out.a_old.assign(n, 0);
    for (size_t j = 0; j < n; ++j) {
        Vec p = softmax_col(old_logits, j, k);
        int arg = argmax_col(old_logits, j, k);
        out.label[j] = arg;
        out.conf[j] = p[arg];
        if (bg[j] && arg > 0 && p[arg] > conf_threshold) out.a_old[j] = 1;
    }
    return out;
}

double loss_ce(const Mat& logits, const std::vector<int32_t>& target,
               const std::vector<uint8_t>& area, Mat* dlogits, double gscale) {
    size_t n = size_t(logits.cols());
    int k = int(logits.rows());
    size_t m = 0;
    for (uint8_t a : area) m += a;
    if (m == 0) return 0.0;

    double loss = 0.0;
    double gs = gscale / double(m);
    for (size_t j = 0; j < n; ++j) {
        if (!area[j]) continue;
        int t = target[j];
        if (t < 0 || t >= k) throw RuntimeError("ce target channel out of range");
        Vec p = softmax_col(logits, j, k);
        loss -= std::log(std::max(p[t], 1e-300));
        if (dlogits) {
            for (int c = 0; c < k; ++c) (*dlogits)(c, j) += gs * p[c];
            (*dlogits)(t, j) -= gs;
        }
    }
    return loss / double(m);
}

double loss_kd(const Mat& new_logits, const Mat& old_logits, int k_old, Mat* dlogits,
               double gscale) {
    size_t n = size_t(new_logits.cols());
    int k = k_old - 1;  // old non-background channels 1..k_old-1
    if (k < 1) throw RuntimeError("kd needs at least one old non-background channel");
    double loss = 0.0;
    double gs = gscale / double(n);
    for (size_t j = 0; j < n; ++j) {
        Vec a = softmax_slice(old_logits, j, 1, k);
        Vec b = softmax_slice(new_logits, j, 1, k);
        double na = a.norm(), nb = b.norm();
        double dot = a.dot(b);
        loss += 1.0 - dot / (na * nb);
        if (dlogits) {
            // d/db of the cosine, then back through the softmax
            Vec g = (dot / (na * nb * nb * nb)) * b - a / (na * nb);
            double gb = g.dot(b);
            for (int c = 0; c < k; ++c) (*dlogits)(1 + c, j) += gs * b[c] * (g[c] - gb);
        }
    }
    return loss / double(n);
}

double loss_ali(const Mat& new_logits, const Mat& old_logits,
                const std::vector<uint8_t>& area, int k_old, Mat* dlogits, double gscale) {
    size_t n = size_t(new_logits.cols());
    int k_new = int(new_logits.rows());
    size_t m = 0;
    for (uint8_t a : area) m += a;
    if (m == 0) return 0.0;

    double loss = 0.0;
    double gs = gscale / double(m);
    for (size_t j = 0; j < n; ++j) {
        if (!area[j]) continue;
        Vec w = softmax_col(old_logits, j, k_old);
        int arg = argmax_col(new_logits, j, k_new);
        double avg = 0.0;
        for (int c = 0; c < k_old; ++c) avg += w[c] * new_logits(c, j);
        loss += new_logits(arg, j) - avg;
        if (dlogits) {
            (*dlogits)(arg, j) += gs;
            for (int c = 0; c < k_old; ++c) (*dlogits)(c, j) -= gs * w[c];
        }
    }
    return loss / double(m);
}

}  // namespace dreampast
