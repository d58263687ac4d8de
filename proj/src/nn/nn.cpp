#include "nn/nn.hpp"

#include <cmath>
#include <cstring>

#include "util/common.hpp"

namespace dreampast {

// ---- ParamSet --------------------------------------------------------------

void ParamSet::add(const std::string& name, Mat& w, Mat& g) {
    g = Mat::Zero(w.rows(), w.cols());
    refs_.push_back({name, w.data(), g.data(), size_t(w.size()),
                     {int64_t(w.rows()), int64_t(w.cols())}});
}

void ParamSet::add(const std::string& name, Vec& w, Vec& g) {
    g = Vec::Zero(w.size());
    refs_.push_back({name, w.data(), g.data(), size_t(w.size()), {int64_t(w.size())}});
}

size_t ParamSet::total() const {
    size_t n = 0;
    for (const auto& r : refs_) n += r.n;
    return n;
}

void ParamSet::zero_grad() {
    for (auto& r : refs_)
        for (size_t i = 0; i < r.n; ++i) r.g[i] = 0.0;
}

void ParamSet::save(CkptWriter& wr) const {
    for (const auto& r : refs_) wr.add(r.name, r.shape, r.w, r.n);
}

void ParamSet::load(const CkptReader& rd) {
    for (auto& r : refs_) rd.read(r.name, r.w, r.n);
}

void ParamSet::copy_values_from(const ParamSet& o) {
    if (o.refs_.size() != refs_.size()) throw RuntimeError("param set structure mismatch");
    for (size_t i = 0; i < refs_.size(); ++i) {
        if (o.refs_[i].n != refs_[i].n) throw RuntimeError("param size mismatch");
        for (size_t j = 0; j < refs_[i].n; ++j) refs_[i].w[j] = o.refs_[i].w[j];
    }
}

uint64_t ParamSet::value_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& r : refs_) {
        for (size_t i = 0; i < r.n; ++i) {
            float f = float(r.w[i]);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int k = 0; k < 4; ++k) {
                h ^= (bits >> (8 * k)) & 0xffu;
                h *= 0x100000001b3ull;
            }
        }
    }
    return h;
}

int pick_groups(int c, int want) {
    for (int g = std::min(c, want); g >= 1; --g)
        if (c % g == 0) return g;
    return 1;
}

// ---- Conv ------------------------------------------------------------------

void Conv::init(int cin_, int cout_, int ksz_, int stride_, Rng& rng) {
    cin = cin_, cout = cout_, ksz = ksz_, stride = stride_;
    if (ksz != 1 && ksz != 3) throw RuntimeError("conv kernel must be 1 or 3");
    int fan_in = cin * ksz * ksz;
    double std = std::sqrt(2.0 / fan_in);  // He init
    w = Mat(cout, fan_in);
    for (int j = 0; j < w.cols(); ++j)
        for (int i = 0; i < w.rows(); ++i) w(i, j) = rng.normal() * std;
    b = Vec::Zero(cout);
    gw = Mat::Zero(cout, fan_in);
    gb = Vec::Zero(cout);
}

void Conv::reg(ParamSet& ps, const std::string& prefix) {
    ps.add(prefix + ".w", w, gw);
    ps.add(prefix + ".b", b, gb);
}

Mat Conv::forward(const Mat& x, int h, int w_) {
    hin_ = h, win_ = w_;
    int ho = hout(h), wo = wout(w_);
    size_t nout = size_t(ho) * wo;
    if (ksz == 1) {
        if (stride != 1) throw RuntimeError("1x1 conv expects stride 1");
        x1_ = x;
        // row-by-row product: each output channel sums in an order that does
        // not depend on cout, so appending head rows never perturbs old logits
        Mat y(cout, x.cols());
        for (int i = 0; i < cout; ++i) y.row(i).noalias() = w.row(i) * x;
        y.colwise() += b;
        return y;
    }
    col_ = Mat::Zero(size_t(cin) * 9, nout);
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            size_t j = size_t(oy) * wo + ox;
            int cy = oy * stride, cx = ox * stride;
            for (int u = 0; u < 9; ++u) {
                int sy = cy + u / 3 - 1, sx = cx + u % 3 - 1;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w_) continue;  // zero padding
                col_.col(j).segment(size_t(u) * cin, cin) = x.col(size_t(sy) * w_ + sx);
            }
        }
    }
    Mat y = w * col_;
    y.colwise() += b;
    return y;
}

Mat Conv::backward(const Mat& dy) {
    if (ksz == 1) {
        gw.noalias() += dy * x1_.transpose();
        gb += dy.rowwise().sum();
        return w.transpose() * dy;
    }
    gw.noalias() += dy * col_.transpose();
    gb += dy.rowwise().sum();
    Mat dcol = w.transpose() * dy;

    int ho = hout(hin_), wo = wout(win_);
    Mat dx = Mat::Zero(cin, size_t(hin_) * win_);
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            size_t j = size_t(oy) * wo + ox;
            int cy = oy * stride, cx = ox * stride;
            for (int u = 0; u < 9; ++u) {
                int sy = cy + u / 3 - 1, sx = cx + u % 3 - 1;
                if (sy < 0 || sy >= hin_ || sx < 0 || sx >= win_) continue;
                dx.col(size_t(sy) * win_ + sx) += dcol.col(j).segment(size_t(u) * cin, cin);
            }
        }
    }
    return dx;
}

// ---- GroupNorm ---------------------------------------------------------------

void GroupNorm::init(int c_, int groups_) {
    c = c_;
    groups = groups_;
    if (c % groups != 0) throw RuntimeError("GroupNorm channels not divisible by groups");
    gamma = Vec::Ones(c);
    beta = Vec::Zero(c);
    ggamma = Vec::Zero(c);
    gbeta = Vec::Zero(c);
}

void GroupNorm::reg(ParamSet& ps, const std::string& prefix) {
    ps.add(prefix + ".gamma", gamma, ggamma);
    ps.add(prefix + ".beta", beta, gbeta);
}

Mat GroupNorm::forward(const Mat& x) {
    int cs = c / groups;
    size_t n = size_t(x.cols());
    xhat_ = Mat(c, n);
    invstd_.assign(groups, 0.0);
    for (int g = 0; g < groups; ++g) {
        auto blk = x.middleRows(g * cs, cs);
        double mean = blk.mean();
        double var = (blk.array() - mean).square().mean();
        double is = 1.0 / std::sqrt(var + eps);
        invstd_[g] = is;
        xhat_.middleRows(g * cs, cs) = (blk.array() - mean) * is;
    }
    Mat y = xhat_;
    y.array().colwise() *= gamma.array();
    y.array().colwise() += beta.array();
    return y;
}

Mat GroupNorm::backward(const Mat& dy) {
    int cs = c / groups;
    size_t n = size_t(dy.cols());
    ggamma += (dy.array() * xhat_.array()).rowwise().sum().matrix();
    gbeta += dy.rowwise().sum();

    Mat dx(c, n);
    for (int g = 0; g < groups; ++g) {
        auto dyb = dy.middleRows(g * cs, cs);
        auto xh = xhat_.middleRows(g * cs, cs);
        Eigen::ArrayXXd dxhat = dyb.array().colwise() * gamma.segment(g * cs, cs).array();
        double m = double(cs) * double(n);
        double s1 = dxhat.sum();
        double s2 = (dxhat * xh.array()).sum();
        dx.middleRows(g * cs, cs) =
            ((dxhat * m - s1 - xh.array() * s2) * (invstd_[g] / m)).matrix();
    }
    return dx;
}

// ---- SiLU ---------------------------------------------------------------------

Mat SiLU::forward(const Mat& x) {
    x_ = x;
    sig_ = (1.0 / (1.0 + (-x.array()).exp())).matrix();
    return (x.array() * sig_.array()).matrix();
}

Mat SiLU::backward(const Mat& dy) {
    return (dy.array() * (sig_.array() + x_.array() * sig_.array() * (1.0 - sig_.array())))
        .matrix();
}

// ---- Linear ---------------------------------------------------------------------

void Linear::init(int in_, int out_, Rng& rng) {
    in = in_, out = out_;
    double std = std::sqrt(2.0 / in);
    w = Mat(out, in);
    for (int j = 0; j < w.cols(); ++j)
        for (int i = 0; i < w.rows(); ++i) w(i, j) = rng.normal() * std;
    b = Vec::Zero(out);
    gw = Mat::Zero(out, in);
    gb = Vec::Zero(out);
}

void Linear::reg(ParamSet& ps, const std::string& prefix) {
    ps.add(prefix + ".w", w, gw);
    ps.add(prefix + ".b", b, gb);
}

Vec Linear::forward(const Vec& x) {
    x_ = x;
    return w * x + b;
}

Vec Linear::backward(const Vec& dy) {
    gw.noalias() += dy * x_.transpose();
    gb += dy;
    return w.transpose() * dy;
}

// ---- upsample ---------------------------------------------------------------------

Mat upsample2_forward(const Mat& x, int h, int w) {
    int H = h * 2, W = w * 2;
    Mat y(x.rows(), size_t(H) * W);
    for (int Y = 0; Y < H; ++Y)
        for (int X = 0; X < W; ++X)
            y.col(size_t(Y) * W + X) = x.col(size_t(Y / 2) * w + X / 2);
    return y;
}

Mat upsample2_backward(const Mat& dy, int h, int w) {
    int H = h * 2, W = w * 2;
    Mat dx = Mat::Zero(dy.rows(), size_t(h) * w);
    for (int Y = 0; Y < H; ++Y)
        for (int X = 0; X < W; ++X)
            dx.col(size_t(Y / 2) * w + X / 2) += dy.col(size_t(Y) * W + X);
    return dx;
}

// ---- optimizers ---------------------------------------------------------------------

void Sgd::init(const ParamSet& ps) { vel_.assign(ps.total(), 0.0); }

void Sgd::step(ParamSet& ps, double lr) {
    if (vel_.size() != ps.total()) throw RuntimeError("optimizer not sized for this model");
    size_t k = 0;
    for (const auto& r : ps.refs()) {
        for (size_t i = 0; i < r.n; ++i, ++k) {
            vel_[k] = momentum * vel_[k] + r.g[i];
            r.w[i] -= lr * vel_[k];
        }
    }
}

void Adam::init(const ParamSet& ps) {
    m_.assign(ps.total(), 0.0);
    v_.assign(ps.total(), 0.0);
    t_ = 0;
}

void Adam::step(ParamSet& ps, double lr) {
    if (m_.size() != ps.total()) throw RuntimeError("optimizer not sized for this model");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1, double(t_));
    double bc2 = 1.0 - std::pow(beta2, double(t_));
    size_t k = 0;
    for (const auto& r : ps.refs()) {
        for (size_t i = 0; i < r.n; ++i, ++k) {
            m_[k] = beta1 * m_[k] + (1.0 - beta1) * r.g[i];
            v_[k] = beta2 * v_[k] + (1.0 - beta2) * r.g[i] * r.g[i];
            double mhat = m_[k] / bc1, vhat = v_[k] / bc2;
            r.w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void Adam::save(CkptWriter& wr) const {
    wr.add("adam_m", {int64_t(m_.size())}, m_.data(), m_.size());
    wr.add("adam_v", {int64_t(v_.size())}, v_.data(), v_.size());
    double tval = double(t_);
    wr.add("adam_t", {1}, &tval, 1);
}

void Adam::load(const CkptReader& rd) {
    m_.resize(rd.numel("adam_m"));
    v_.resize(rd.numel("adam_v"));
    rd.read("adam_m", m_.data(), m_.size());
    rd.read("adam_v", v_.data(), v_.size());
    double tval = 0.0;
    rd.read("adam_t", &tval, 1);
    t_ = int64_t(tval);
}

Vec sinusoidal_embedding(int tau, int dim) {
    Vec e(dim);
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
        e[2 * i] = std::sin(tau * freq);
        e[2 * i + 1] = std::cos(tau * freq);
    }
    if (dim % 2) e[dim - 1] = 0.0;
    return e;
}

}  // namespace dreampast
