#include "nn/unet.hpp"

#include "util/common.hpp"

namespace dreampast {

UNetConfig UNetConfig::from_json(const json& j) {
    UNetConfig c;
    c.in_ch = j.value("in_ch", c.in_ch);
    c.out_ch = j.value("out_ch", c.out_ch);
    c.base = j.value("base", c.base);
    c.cond_dim = j.value("cond_dim", c.cond_dim);
    c.groups = j.value("groups", c.groups);
    c.num_embeddings = j.value("num_embeddings", c.num_embeddings);
    return c;
}

json UNetConfig::to_json() const {
    return json{{"in_ch", in_ch},       {"out_ch", out_ch},
                {"base", base},         {"cond_dim", cond_dim},
                {"groups", groups},     {"num_embeddings", num_embeddings}};
}

// ---- ResBlock ----------------------------------------------------------------

void ResBlock::init(int cin_, int cout_, int cond_dim, int groups, Rng& rng) {
    cin = cin_, cout = cout_;
    gn1_.init(cin, pick_groups(cin, groups));
    conv1_.init(cin, cout, 3, 1, rng);
    condproj_.init(cond_dim, cout, rng);
    gn2_.init(cout, pick_groups(cout, groups));
    conv2_.init(cout, cout, 3, 1, rng);
    projected_skip_ = (cin != cout);
    if (projected_skip_) skip_.init(cin, cout, 1, 1, rng);
}

void ResBlock::reg(ParamSet& ps, const std::string& prefix) {
    gn1_.reg(ps, prefix + ".gn1");
    conv1_.reg(ps, prefix + ".conv1");
    condproj_.reg(ps, prefix + ".cond");
    gn2_.reg(ps, prefix + ".gn2");
    conv2_.reg(ps, prefix + ".conv2");
    if (projected_skip_) skip_.reg(ps, prefix + ".skip");
}

Mat ResBlock::forward(const Mat& x, int h, int w, const Vec& cond) {
    h_ = h, w_ = w;
    Mat t = conv1_.forward(act1_.forward(gn1_.forward(x)), h_, w_);
    t.colwise() += condproj_.forward(cond);
    t = conv2_.forward(act2_.forward(gn2_.forward(t)), h_, w_);
    if (projected_skip_) return t + skip_.forward(x, h_, w_);
    return t + x;
}

Mat ResBlock::backward(const Mat& dy, Vec& dcond) {
    Mat dh = conv2_.backward(dy);
    dh = gn2_.backward(act2_.backward(dh));
    dcond += condproj_.backward(dh.rowwise().sum());
    Mat dx = gn1_.backward(act1_.backward(conv1_.backward(dh)));
    if (projected_skip_)
        dx += skip_.backward(dy);
    else
        dx += dy;
    return dx;
}

// ---- UNet ----------------------------------------------------------------------

UNet::UNet(const UNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    int c1 = cfg.base, c2 = cfg.base * 2, c3 = cfg.base * 4;

    emb_table_ = Mat(cfg.num_embeddings, cfg.cond_dim);
    for (int j = 0; j < emb_table_.cols(); ++j)
        for (int i = 0; i < emb_table_.rows(); ++i) emb_table_(i, j) = rng.normal() * 0.1;

    cond1_.init(cfg.cond_dim, cfg.cond_dim, rng);
    cond2_.init(cfg.cond_dim, cfg.cond_dim, rng);

    stem_.init(cfg.in_ch, c1, 3, 1, rng);
    rb0_.init(c1, c1, cfg.cond_dim, cfg.groups, rng);
    down1_.init(c1, c2, 3, 2, rng);
    rb1_.init(c2, c2, cfg.cond_dim, cfg.groups, rng);
    down2_.init(c2, c3, 3, 2, rng);
    rb2_.init(c3, c3, cfg.cond_dim, cfg.groups, rng);
    mid_.init(c3, c3, cfg.cond_dim, cfg.groups, rng);
    upc1_.init(c3, c2, 3, 1, rng);
    urb1_.init(c2 * 2, c2, cfg.cond_dim, cfg.groups, rng);
    upc2_.init(c2, c1, 3, 1, rng);
    urb2_.init(c1 * 2, c1, cfg.cond_dim, cfg.groups, rng);
    ogn_.init(c1, pick_groups(c1, cfg.groups));
    oconv_.init(c1, cfg.out_ch, 3, 1, rng);

    params_.add("class_emb", emb_table_, gemb_table_);
    cond1_.reg(params_, "cond1");
    cond2_.reg(params_, "cond2");
    stem_.reg(params_, "stem");
    rb0_.reg(params_, "rb0");
    down1_.reg(params_, "down1");
    rb1_.reg(params_, "rb1");
    down2_.reg(params_, "down2");
    rb2_.reg(params_, "rb2");
    mid_.reg(params_, "mid");
    upc1_.reg(params_, "upc1");
    urb1_.reg(params_, "urb1");
    upc2_.reg(params_, "upc2");
    urb2_.reg(params_, "urb2");
    ogn_.reg(params_, "out_gn");
    oconv_.reg(params_, "out_conv");
}

Mat UNet::forward(const Mat& x3, int h, int w, const EdgeMap* edge, int tau,
                  int class_id, const Vec* token) {
    if (h % 4 || w % 4) throw RuntimeError("denoiser input size must be divisible by 4");
    if (class_id >= cfg_.num_embeddings)
        throw RuntimeError("class id outside the embedding table");
    h_ = h, w_ = w;
    class_id_ = (token == nullptr) ? class_id : -1;

    Vec cemb = Vec::Zero(cfg_.cond_dim);
    if (token)
        cemb = *token;
    else if (class_id >= 1)
        cemb = emb_table_.row(class_id).transpose();
    Vec cond_in = sinusoidal_embedding(tau, cfg_.cond_dim) + cemb;
    Vec cond = cond2_.forward(cond_act_.forward(cond1_.forward(cond_in)));

    Mat x(cfg_.in_ch, x3.cols());
    x.topRows(3) = x3;
    x.row(3).setZero();
    if (edge) {
        if (edge->h != h || edge->w != w) throw RuntimeError("edge map size mismatch");
        for (size_t i = 0; i < edge->v.size(); ++i) x(3, i) = double(edge->v[i]);
    }

    Mat s = stem_.forward(x, h, w);
    a0_ = rb0_.forward(s, h, w, cond);
    Mat d1 = down1_.forward(a0_, h, w);
    a1_ = rb1_.forward(d1, h / 2, w / 2, cond);
    Mat d2 = down2_.forward(a1_, h / 2, w / 2);
    Mat a2 = rb2_.forward(d2, h / 4, w / 4, cond);
    Mat m = mid_.forward(a2, h / 4, w / 4, cond);

    Mat u1 = upc1_.forward(upsample2_forward(m, h / 4, w / 4), h / 2, w / 2);
    Mat cat1(u1.rows() + a1_.rows(), u1.cols());
    cat1 << u1, a1_;
    Mat b1 = urb1_.forward(cat1, h / 2, w / 2, cond);

    Mat u2 = upc2_.forward(upsample2_forward(b1, h / 2, w / 2), h, w);
    Mat cat2(u2.rows() + a0_.rows(), u2.cols());
    cat2 << u2, a0_;
    Mat b2 = urb2_.forward(cat2, h, w, cond);

    return oconv_.forward(oact_.forward(ogn_.forward(b2)), h, w);
}

void UNet::backward(const Mat& deps) {
    int c1 = cfg_.base, c2 = cfg_.base * 2;
    Vec dcond = Vec::Zero(cfg_.cond_dim);

    Mat db2 = ogn_.backward(oact_.backward(oconv_.backward(deps)));
    Mat dcat2 = urb2_.backward(db2, dcond);
    Mat du2 = dcat2.topRows(c1);
    Mat da0_skip = dcat2.bottomRows(c1);
    Mat db1 = upsample2_backward(upc2_.backward(du2), h_ / 2, w_ / 2);

    Mat dcat1 = urb1_.backward(db1, dcond);
    Mat du1 = dcat1.topRows(c2);
    Mat da1_skip = dcat1.bottomRows(c2);
    Mat dm = upsample2_backward(upc1_.backward(du1), h_ / 4, w_ / 4);

    Mat da2 = mid_.backward(dm, dcond);
    Mat dd2 = rb2_.backward(da2, dcond);
    Mat da1 = down2_.backward(dd2) + da1_skip;
    Mat dd1 = rb1_.backward(da1, dcond);
    Mat da0 = down1_.backward(dd1) + da0_skip;
    Mat ds = rb0_.backward(da0, dcond);
    stem_.backward(ds);  // input gradient not needed

    Vec dcond_in = cond1_.backward(cond_act_.backward(cond2_.backward(dcond)));
    dcemb_ = dcond_in;
    if (class_id_ >= 1) gemb_table_.row(class_id_) += dcond_in.transpose();
}

Vec UNet::class_embedding(int class_id) const {
    if (class_id < 1 || class_id >= cfg_.num_embeddings)
        throw RuntimeError("class id outside the embedding table");
    return emb_table_.row(class_id).transpose();
}

void UNet::save(const fs::path& p, const json& extra_meta) const {
    json meta = extra_meta;
    meta["config"] = cfg_.to_json();
    CkptWriter wr("denoiser", meta);
    params_.save(wr);
    wr.write(p);
}

std::unique_ptr<UNet> UNet::load(const fs::path& p, json* meta_out) {
    CkptReader rd(p);
    if (rd.kind() != "denoiser") throw RuntimeError("not a denoiser checkpoint: " + p.string());
    UNetConfig cfg = UNetConfig::from_json(rd.meta().at("config"));
    Rng scratch(0);
    auto net = std::make_unique<UNet>(cfg, scratch);
    net->params_.load(rd);
    if (meta_out) *meta_out = rd.meta();
    return net;
}

std::unique_ptr<UNet> UNet::clone() const {
    Rng scratch(0);
    auto net = std::make_unique<UNet>(cfg_, scratch);
    net->params_.copy_values_from(params_);
    return net;
}

}  // namespace dreampast
