#include "nn/segnet.hpp"

#include "util/common.hpp"

namespace dreampast {

SegNetConfig SegNetConfig::from_json(const json& j) {
    SegNetConfig c;
    c.in_ch = j.value("in_ch", c.in_ch);
    c.base = j.value("base", c.base);
    c.groups = j.value("groups", c.groups);
    c.head_init_std = j.value("head_init_std", c.head_init_std);
    return c;
}

json SegNetConfig::to_json() const {
    return json{{"in_ch", in_ch}, {"base", base}, {"groups", groups},
                {"head_init_std", head_init_std}};
}

SegNet::SegNet(const SegNetConfig& cfg, int num_classes, Rng& rng) : cfg_(cfg), k_(num_classes) {
    if (num_classes < 1) throw RuntimeError("segmenter needs at least one class");
    int b = cfg.base, g = cfg.groups;
    auto mk = [&](Stage& s, int cin, int cout, int stride) {
        s.conv.init(cin, cout, 3, stride, rng);
        s.gn.init(cout, pick_groups(cout, g));
    };
    mk(e0a_, cfg.in_ch, b, 1);
    mk(e0b_, b, b, 1);
    mk(e1a_, b, 2 * b, 2);
    mk(e1b_, 2 * b, 2 * b, 1);
    mk(e2a_, 2 * b, 4 * b, 2);
    mk(e2b_, 4 * b, 4 * b, 1);
    mk(d1a_, 4 * b, 2 * b, 1);
    mk(d1b_, 4 * b, 2 * b, 1);  // after concat with skip1
    mk(d0a_, 2 * b, b, 1);
    mk(d0b_, 2 * b, b, 1);  // after concat with skip0
    head_.init(b, num_classes, 1, 1, rng);
    // task-specific head starts near zero; trunk uses the usual He init
    head_.w *= cfg.head_init_std / std::sqrt(2.0 / b);
    collect_params();
}

void SegNet::collect_params() {
    params_ = ParamSet();
    e0a_.conv.reg(params_, "e0a.conv"), e0a_.gn.reg(params_, "e0a.gn");
    e0b_.conv.reg(params_, "e0b.conv"), e0b_.gn.reg(params_, "e0b.gn");
    e1a_.conv.reg(params_, "e1a.conv"), e1a_.gn.reg(params_, "e1a.gn");
    e1b_.conv.reg(params_, "e1b.conv"), e1b_.gn.reg(params_, "e1b.gn");
    e2a_.conv.reg(params_, "e2a.conv"), e2a_.gn.reg(params_, "e2a.gn");
    e2b_.conv.reg(params_, "e2b.conv"), e2b_.gn.reg(params_, "e2b.gn");
    d1a_.conv.reg(params_, "d1a.conv"), d1a_.gn.reg(params_, "d1a.gn");
    d1b_.conv.reg(params_, "d1b.conv"), d1b_.gn.reg(params_, "d1b.gn");
    d0a_.conv.reg(params_, "d0a.conv"), d0a_.gn.reg(params_, "d0a.gn");
    d0b_.conv.reg(params_, "d0b.conv"), d0b_.gn.reg(params_, "d0b.gn");
    head_.reg(params_, "head");
}

Mat SegNet::forward(const Mat& x, int h, int w) {
    if (h % 4 || w % 4) throw RuntimeError("segmenter input size must be divisible by 4");
    h_ = h, w_ = w;
    s0_ = e0b_.forward(e0a_.forward(x, h, w), h, w);
    s1_ = e1b_.forward(e1a_.forward(s0_, h, w), h / 2, w / 2);
    Mat e2 = e2b_.forward(e2a_.forward(s1_, h / 2, w / 2), h / 4, w / 4);

    Mat d1 = d1a_.forward(upsample2_forward(e2, h / 4, w / 4), h / 2, w / 2);
    Mat cat1(d1.rows() + s1_.rows(), d1.cols());
    cat1 << d1, s1_;
    Mat d1o = d1b_.forward(cat1, h / 2, w / 2);

    Mat d0 = d0a_.forward(upsample2_forward(d1o, h / 2, w / 2), h, w);
    Mat cat0(d0.rows() + s0_.rows(), d0.cols());
    cat0 << d0, s0_;
    Mat d0o = d0b_.forward(cat0, h, w);

    return head_.forward(d0o, h, w);
}

void SegNet::backward(const Mat& dlogits) {
    int b = cfg_.base;
    Mat dd0o = head_.backward(dlogits);
    Mat dcat0 = d0b_.backward(dd0o);
    Mat dd0 = dcat0.topRows(b);
    Mat ds0_skip = dcat0.bottomRows(b);
    Mat dd1o = upsample2_backward(d0a_.backward(dd0), h_ / 2, w_ / 2);

    Mat dcat1 = d1b_.backward(dd1o);
    Mat dd1 = dcat1.topRows(2 * b);
    Mat ds1_skip = dcat1.bottomRows(2 * b);
    Mat de2 = upsample2_backward(d1a_.backward(dd1), h_ / 4, w_ / 4);

    Mat ds1 = e2a_.backward(e2b_.backward(de2)) + ds1_skip;
    Mat ds0 = e1a_.backward(e1b_.backward(ds1)) + ds0_skip;
    e0a_.backward(e0b_.backward(ds0));
}

void SegNet::extend_head(int n_new, Rng& rng) {
    if (n_new < 1) throw RuntimeError("extend_head needs n_new >= 1");
    int old_k = k_;
    k_ += n_new;
    head_.w.conservativeResize(k_, Eigen::NoChange);
    head_.b.conservativeResize(k_);
    for (int i = old_k; i < k_; ++i) {
        for (int j = 0; j < head_.w.cols(); ++j)
            head_.w(i, j) = rng.normal() * cfg_.head_init_std;
        head_.b[i] = 0.0;
    }
    head_.cout = k_;
    collect_params();  // grad buffers resize with the head
}

void SegNet::save(const fs::path& p, const json& extra_meta) const {
    json meta = extra_meta;
    meta["config"] = cfg_.to_json();
    meta["num_classes"] = k_;
    CkptWriter wr("segmenter", meta);
    params_.save(wr);
    wr.write(p);
}

std::unique_ptr<SegNet> SegNet::load(const fs::path& p, json* meta_out) {
    CkptReader rd(p);
    if (rd.kind() != "segmenter")
        throw RuntimeError("not a segmenter checkpoint: " + p.string());
    SegNetConfig cfg = SegNetConfig::from_json(rd.meta().at("config"));
    int k = rd.meta().at("num_classes").get<int>();
    Rng scratch(0);
    auto net = std::make_unique<SegNet>(cfg, k, scratch);
    net->params_.load(rd);
    if (meta_out) *meta_out = rd.meta();
    return net;
}

std::unique_ptr<SegNet> SegNet::clone() const {
    Rng scratch(0);
    auto net = std::make_unique<SegNet>(cfg_, k_, scratch);
    net->params_.copy_values_from(params_);
    return net;
}

}  // namespace dreampast
