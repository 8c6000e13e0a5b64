#include "hmm.hpp"

#include <cmath>

namespace cloth {

namespace {

size_t checked_phi_len(int p, int q) {
    if (q < 1) throw ParameterError("moment order must be >= 1");
    if (q > 8) throw ParameterError("moment order capped at 8");
    double len = 1.0;
    for (int i = 0; i < q; ++i) len *= p;
    if (len > 1e6) throw ScaleError("phi_flatten: p^q exceeds the oracle bound of 1e6");
    return static_cast<size_t>(len);
}

double pow_int(double x, int q) {
    double r = 1.0;
    for (int i = 0; i < q; ++i) r *= x;
    return r;
}

}  // namespace

Vec phi_flatten(const Vec& z, int q) {
    const int p = static_cast<int>(z.size());
    if (p == 0) throw DimensionError("phi_flatten: empty vector");
    const size_t len = checked_phi_len(p, q);
    Vec out = z;
    out.reserve(len);
    for (int step = 1; step < q; ++step) {
        Vec next(out.size() * static_cast<size_t>(p));
        size_t k = 0;
        for (double prefix : out)
            for (int j = 0; j < p; ++j) next[k++] = prefix * z[j];
        out = std::move(next);
    }
    return out;
}

namespace {

Vec mean_phi(const Mat& rows, int q, double coord_scale) {
    const size_t len = checked_phi_len(rows.cols, q);
    Vec acc(len, 0.0);
    Vec scaled(static_cast<size_t>(rows.cols));
    for (int i = 0; i < rows.rows; ++i) {
        for (int j = 0; j < rows.cols; ++j) scaled[j] = coord_scale * rows(i, j);
        Vec f = phi_flatten(scaled, q);
        for (size_t k = 0; k < len; ++k) acc[k] += f[k];
    }
    for (auto& x : acc) x /= rows.rows;
    return acc;
}

}  // namespace

double hm_bruteforce(const LatentBatch& u, const LatentBatch& v, int q) {
    if (u.size() == 0 || v.size() == 0) throw DomainError("hm_bruteforce: empty batch");
    if (u.dim() != v.dim()) throw DimensionError("hm_bruteforce: dimension mismatch");
    const Vec mu = mean_phi(u.values, q, 1.0);
    const Vec mv = mean_phi(v.values, q, 1.0);
    double d = 0.0;
    for (size_t k = 0; k < mu.size(); ++k) {
        const double diff = mu[k] - mv[k];
        d += diff * diff;
    }
    return d;
}

double hm_kernel(const LatentBatch& u, const LatentBatch& v, int q, double scale) {
    if (u.size() == 0 || v.size() == 0) throw DomainError("hm_kernel: empty batch");
    if (u.dim() != v.dim()) throw DimensionError("hm_kernel: dimension mismatch");
    const Mat kuu = matmul_nt(u.values, u.values);
    const Mat kvv = matmul_nt(v.values, v.values);
    const Mat kuv = matmul_nt(u.values, v.values);
    double suu = 0.0, svv = 0.0, suv = 0.0;
    for (double g : kuu.data) suu += pow_int(scale * g, q);
    for (double g : kvv.data) svv += pow_int(scale * g, q);
    for (double g : kuv.data) suv += pow_int(scale * g, q);
    const double nu = u.size(), nv = v.size();
    return suu / (nu * nu) + svv / (nv * nv) - 2.0 * suv / (nu * nv);
}

CahommResult cahomm_loss(const LatentBatch& source, const std::vector<int>& source_labels, int class_count,
                         const LatentBatch& target, const Mat& t_probs, int q, double scale,
                         bool with_grads) {
    const int ns = source.size();
    const int nt = target.size();
    const int p = source.dim();
    if (static_cast<int>(source_labels.size()) != ns)
        throw DimensionError("cahomm_loss: label count does not match source batch");
    if (target.dim() != p) throw DimensionError("cahomm_loss: latent dimensions differ");
    if (t_probs.rows != nt || t_probs.cols != class_count)
        throw DimensionError("cahomm_loss: t_probs must be n_T x M");
    for (int y : source_labels)
        if (y < 1 || y > class_count) throw DataError("cahomm_loss: label out of range");

    std::vector<std::vector<int>> by_class(static_cast<size_t>(class_count));
    for (int i = 0; i < ns; ++i) by_class[source_labels[i] - 1].push_back(i);
    int present = 0;
    for (const auto& idx : by_class)
        if (!idx.empty()) ++present;

    CahommResult res;
    res.classes_present = present;
    res.classes_skipped = class_count - present;
    if (with_grads) {
        res.grad_source = Mat(ns, p);
        res.grad_target = Mat(nt, p);
        res.grad_tprobs = Mat(nt, class_count);
    }
    if (present == 0)
        return res;  // degenerate batch: no class evidence, loss stays 0

    const Mat gss = matmul_nt(source.values, source.values);
    const Mat gtt = matmul_nt(target.values, target.values);
    const Mat gst = matmul_nt(source.values, target.values);

    auto kq = [&](double g) { return pow_int(scale * g, q); };
    auto kq_prime = [&](double g) { return q * scale * pow_int(scale * g, q - 1); };

    const double inv_mp = 1.0 / present;
    Mat coef_ss, coef_tt, coef_st;
    if (with_grads) {
        coef_ss = Mat(ns, ns);
        coef_tt = Mat(nt, nt);
        coef_st = Mat(ns, nt);
    }

    double loss = 0.0;
    for (int m = 0; m < class_count; ++m) {
        const auto& idx = by_class[m];
        if (idx.empty()) continue;
        const double nm = static_cast<double>(idx.size());

        double term_ss = 0.0;
        for (int i : idx)
            for (int j : idx) term_ss += kq(gss(i, j));
        term_ss /= nm * nm;

        double term_tt = 0.0;
        for (int a = 0; a < nt; ++a) {
            const double wa = t_probs(a, m);
            const double* ga = gtt.row_ptr(a);
            for (int b = 0; b < nt; ++b) term_tt += wa * t_probs(b, m) * kq(ga[b]);
        }
        term_tt /= static_cast<double>(nt) * nt;

        double term_st = 0.0;
        for (int i : idx) {
            const double* gi = gst.row_ptr(i);
            for (int b = 0; b < nt; ++b) term_st += t_probs(b, m) * kq(gi[b]);
        }
        term_st /= nm * nt;

        loss += term_ss + term_tt - 2.0 * term_st;

        if (!with_grads) continue;

        const double css = 2.0 * inv_mp / (nm * nm);
        for (int i : idx)
            for (int j : idx) coef_ss(i, j) += css * kq_prime(gss(i, j));

        const double ctt = 2.0 * inv_mp / (static_cast<double>(nt) * nt);
        for (int a = 0; a < nt; ++a) {
            const double wa = t_probs(a, m);
            const double* ga = gtt.row_ptr(a);
            double* ca = coef_tt.row_ptr(a);
            for (int b = 0; b < nt; ++b) ca[b] += ctt * wa * t_probs(b, m) * kq_prime(ga[b]);
        }

        const double cst = -2.0 * inv_mp / (nm * nt);
        for (int i : idx) {
            const double* gi = gst.row_ptr(i);
            double* ci = coef_st.row_ptr(i);
            for (int b = 0; b < nt; ++b) ci[b] += cst * t_probs(b, m) * kq_prime(gi[b]);
        }

        // d loss / d t_probs(:, m)
        for (int b = 0; b < nt; ++b) {
            double acc = 0.0;
            const double* gb = gtt.row_ptr(b);
            for (int a = 0; a < nt; ++a) acc += t_probs(a, m) * kq(gb[a]);
            acc *= 2.0 / (static_cast<double>(nt) * nt);
            double cross = 0.0;
            for (int i : idx) cross += kq(gst(i, b));
            acc -= 2.0 * cross / (nm * nt);
            res.grad_tprobs(b, m) += inv_mp * acc;
        }
    }
    res.value = loss * inv_mp;

    if (with_grads) {
        const Mat a = matmul(coef_ss, source.values);
        const Mat b = matmul(coef_st, target.values);
        for (size_t k = 0; k < res.grad_source.data.size(); ++k) res.grad_source.data[k] = a.data[k] + b.data[k];
        const Mat c = matmul(coef_tt, target.values);
        const Mat cross_t = matmul_tn(coef_st, source.values);
        for (size_t k = 0; k < res.grad_target.data.size(); ++k) res.grad_target.data[k] = c.data[k] + cross_t.data[k];
    }
    return res;
}

double cahomm_bruteforce(const LatentBatch& source, const std::vector<int>& source_labels, int class_count,
                         const LatentBatch& target, const Mat& t_probs, int q, double scale) {
    const int ns = source.size();
    const int nt = target.size();
    const int p = source.dim();
    if (static_cast<int>(source_labels.size()) != ns)
        throw DimensionError("cahomm_bruteforce: label count does not match source batch");
    const double coord_scale = std::sqrt(scale);
    const size_t len = checked_phi_len(p, q);

    std::vector<std::vector<int>> by_class(static_cast<size_t>(class_count));
    for (int i = 0; i < ns; ++i) by_class[source_labels[i] - 1].push_back(i);

    // weighted target mean of phi per class: (1/n_T) sum_j w_jm phi(z_j)
    Vec scaled(static_cast<size_t>(p));
    std::vector<Vec> target_phi(static_cast<size_t>(nt));
    for (int j = 0; j < nt; ++j) {
        for (int k = 0; k < p; ++k) scaled[k] = coord_scale * target.values(j, k);
        target_phi[j] = phi_flatten(scaled, q);
    }

    double loss = 0.0;
    int present = 0;
    for (int m = 0; m < class_count; ++m) {
        const auto& idx = by_class[m];
        if (idx.empty()) continue;
        ++present;
        Vec src_mean(len, 0.0);
        for (int i : idx) {
            for (int k = 0; k < p; ++k) scaled[k] = coord_scale * source.values(i, k);
            Vec f = phi_flatten(scaled, q);
            for (size_t k = 0; k < len; ++k) src_mean[k] += f[k];
        }
        for (auto& x : src_mean) x /= idx.size();

        Vec tgt_mean(len, 0.0);
        for (int j = 0; j < nt; ++j) {
            const double w = t_probs(j, m);
            if (w == 0.0) continue;
            for (size_t k = 0; k < len; ++k) tgt_mean[k] += w * target_phi[j][k];
        }
        for (auto& x : tgt_mean) x /= nt;

        for (size_t k = 0; k < len; ++k) {
            const double diff = src_mean[k] - tgt_mean[k];
            loss += diff * diff;
        }
    }
    return present > 0 ? loss / present : 0.0;
}

}  // namespace cloth
