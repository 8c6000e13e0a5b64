#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hmm.hpp"

using namespace cloth;

namespace {

Mat mat(int r, int c, std::initializer_list<double> vals) {
    Mat m(r, c);
    std::copy(vals.begin(), vals.end(), m.data.begin());
    return m;
}

Mat random_mat(SeededStream& s, int rows, int cols) {
    Mat m(rows, cols);
    for (auto& x : m.data) x = s.next_uniform(-1.0, 1.0);
    return m;
}

}  // namespace

TEST_CASE("phi_flatten") {
    CHECK(phi_flatten({1.0, 2.0}, 2) == Vec{1.0, 2.0, 2.0, 4.0});
    CHECK(phi_flatten({3.0, -1.0, 0.5}, 1) == Vec{3.0, -1.0, 0.5});
    const Vec onehot = phi_flatten({1.0, 0.0, 0.0}, 3);
    REQUIRE(onehot.size() == 27);
    CHECK(onehot[0] == 1.0);
    for (size_t k = 1; k < onehot.size(); ++k) CHECK(onehot[k] == 0.0);
    CHECK_THROWS_AS(phi_flatten(Vec(50, 1.0), 8), ScaleError);
}

TEST_CASE("hm_bruteforce basics") {
    const LatentBatch u{mat(2, 2, {1.0, 0.0, 0.0, 1.0})};
    CHECK(hm_bruteforce(u, u, 2) == doctest::Approx(0.0));

    const LatentBatch a{mat(1, 2, {1.0, 0.0})};
    const LatentBatch b{mat(1, 2, {0.0, 1.0})};
    CHECK(hm_bruteforce(a, b, 2) == doctest::Approx(2.0));

    // q=1 reduces to the squared distance between batch means
    SeededStream s(1, "hm");
    const LatentBatch x{random_mat(s, 5, 3)};
    const LatentBatch y{random_mat(s, 4, 3)};
    Vec mx(3, 0.0), my(3, 0.0);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j) mx[j] += x.values(i, j) / 5.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) my[j] += y.values(i, j) / 4.0;
    double expect = 0.0;
    for (int j = 0; j < 3; ++j) expect += (mx[j] - my[j]) * (mx[j] - my[j]);
    CHECK(hm_bruteforce(x, y, 1) == doctest::Approx(expect).epsilon(1e-12));

    CHECK_THROWS_AS(hm_bruteforce(LatentBatch{Mat(0, 2)}, a, 1), DomainError);
}

TEST_CASE("hm_kernel hand case and self-distance") {
    const LatentBatch a{mat(1, 2, {1.0, 0.0})};
    const LatentBatch b{mat(1, 2, {0.0, 1.0})};
    // <a,a>^2 + <b,b>^2 - 2<a,b>^2 = 1 + 1 - 0
    CHECK(hm_kernel(a, b, 2, 1.0) == doctest::Approx(2.0));
    const LatentBatch u{mat(3, 2, {0.3, -0.2, 1.0, 0.5, -0.7, 0.1})};
    CHECK(hm_kernel(u, u, 3, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("kernel equals flatten oracle over the randomized grid") {
    SeededStream s(20240811, "prop");
    int trials = 0;
    for (int p : {2, 3, 4})
        for (int q : {1, 2, 3})
            for (int n : {2, 4, 8})
                for (int rep = 0; rep < 8; ++rep) {
                    const LatentBatch u{random_mat(s, n, p)};
                    const LatentBatch v{random_mat(s, 1 + static_cast<int>(s.next_below(n)), p)};
                    const double brute = hm_bruteforce(u, v, q);
                    const double kernel = hm_kernel(u, v, q, 1.0);
                    CHECK(std::abs(kernel - brute) <= 1e-10 * std::max(1.0, std::abs(brute)));
                    ++trials;
                }
    CHECK(trials >= 200);
}

TEST_CASE("hm_kernel symmetry and nonnegativity") {
    SeededStream s(5, "sym");
    for (int t = 0; t < 50; ++t) {
        const LatentBatch u{random_mat(s, 3, 3)};
        const LatentBatch v{random_mat(s, 5, 3)};
        const int q = 1 + static_cast<int>(s.next_below(3));
        const double uv = hm_kernel(u, v, q, 1.0);
        CHECK(uv == doctest::Approx(hm_kernel(v, u, q, 1.0)).epsilon(1e-12));
        if (q % 2 == 0 || q == 1) CHECK(uv >= -1e-12);
    }
}

TEST_CASE("cahomm reduces to hm_kernel for one class with unit weights") {
    SeededStream s(6, "red");
    const Mat src = random_mat(s, 4, 3);
    const Mat tgt = random_mat(s, 5, 3);
    const std::vector<int> labels(4, 1);
    const Mat t_probs(5, 1, 1.0);
    const CahommResult r = cahomm_loss(LatentBatch{src}, labels, 1, LatentBatch{tgt}, t_probs, 2, 1.0);
    CHECK(r.value == doctest::Approx(hm_kernel(LatentBatch{src}, LatentBatch{tgt}, 2, 1.0)).epsilon(1e-12));
}

TEST_CASE("cahomm with zero transport weights keeps only the source self term") {
    SeededStream s(7, "zero");
    const Mat src = random_mat(s, 6, 2);
    const std::vector<int> labels = {1, 2, 1, 2, 1, 2};
    const Mat tgt = random_mat(s, 4, 2);
    const Mat t_probs(4, 2);  // all zeros
    const CahommResult r = cahomm_loss(LatentBatch{src}, labels, 2, LatentBatch{tgt}, t_probs, 2, 1.0);
    double expect = 0.0;
    for (int m = 0; m < 2; ++m) {
        Mat rows(3, 2);
        int k = 0;
        for (int i = 0; i < 6; ++i)
            if (labels[i] == m + 1) {
                rows(k, 0) = src(i, 0);
                rows(k, 1) = src(i, 1);
                ++k;
            }
        const LatentBatch cls{rows};
        double self = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double d = dot(cls.values.row(i), cls.values.row(j));
                self += d * d;
            }
        expect += self / 9.0;
    }
    expect /= 2.0;
    CHECK(r.value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("cahomm matches the flatten route on small instances") {
    SeededStream s(8, "oracle");
    for (int t = 0; t < 60; ++t) {
        const int p = 2 + static_cast<int>(s.next_below(2));
        const int q = 1 + static_cast<int>(s.next_below(3));
        const int m = 2 + static_cast<int>(s.next_below(2));
        const int ns = 3 + static_cast<int>(s.next_below(4));
        const int nt = 3 + static_cast<int>(s.next_below(4));
        const Mat src = random_mat(s, ns, p);
        const Mat tgt = random_mat(s, nt, p);
        std::vector<int> labels(ns);
        for (auto& y : labels) y = 1 + static_cast<int>(s.next_below(m));
        Mat tp(nt, m);
        for (int i = 0; i < nt; ++i) {
            Vec logits(m);
            for (auto& x : logits) x = s.next_uniform(-2.0, 2.0);
            const Vec pr = softmax(logits);
            std::copy(pr.begin(), pr.end(), tp.row_ptr(i));
        }
        const double scale = t % 2 == 0 ? 1.0 : 0.5;
        const double kernel =
            cahomm_loss(LatentBatch{src}, labels, m, LatentBatch{tgt}, tp, q, scale, false).value;
        const double flat = cahomm_bruteforce(LatentBatch{src}, labels, m, LatentBatch{tgt}, tp, q, scale);
        CHECK(std::abs(kernel - flat) <= 1e-10 * std::max(1.0, std::abs(flat)));
    }
}

TEST_CASE("cahomm explicit small instance") {
    // p=2, q=2, one class: means of phi_2 computed by hand
    const Mat src = mat(3, 2, {1.0, 0.0, 0.0, 1.0, 1.0, 1.0});
    const Mat tgt = mat(2, 2, {1.0, 0.0, 0.0, 1.0});
    const std::vector<int> labels = {1, 1, 1};
    Mat tp(2, 1, 1.0);
    // source mean phi2 = mean of (1,0,0,0),(0,0,0,1),(1,1,1,1) = (2/3,1/3,1/3,2/3)
    // target weighted mean = mean of (1,0,0,0),(0,0,0,1) = (1/2,0,0,1/2)
    // diff = (1/6,1/3,1/3,1/6); ||diff||^2 = 2*(1/36) + 2*(1/9) = 5/18
    const CahommResult r = cahomm_loss(LatentBatch{src}, labels, 1, LatentBatch{tgt}, tp, 2, 1.0);
    CHECK(r.value == doctest::Approx(5.0 / 18.0).epsilon(1e-12));
}

TEST_CASE("cahomm skips absent classes and renormalizes") {
    SeededStream s(9, "skip");
    const Mat src = random_mat(s, 4, 2);
    const std::vector<int> labels = {1, 1, 1, 1};  // class 2 absent
    const Mat tgt = random_mat(s, 3, 2);
    Mat tp(3, 2);
    for (int i = 0; i < 3; ++i) {
        tp(i, 0) = 0.5;
        tp(i, 1) = 0.5;
    }
    const CahommResult r = cahomm_loss(LatentBatch{src}, labels, 2, LatentBatch{tgt}, tp, 2, 1.0);
    CHECK(r.classes_present == 1);
    CHECK(r.classes_skipped == 1);
    // average over the single present class only
    const std::vector<int> labels1(4, 1);
    Mat tp1(3, 1);
    for (int i = 0; i < 3; ++i) tp1(i, 0) = 0.5;
    const CahommResult r1 = cahomm_loss(LatentBatch{src}, labels1, 1, LatentBatch{tgt}, tp1, 2, 1.0);
    CHECK(r.value == doctest::Approx(r1.value).epsilon(1e-12));
}

TEST_CASE("cahomm gradients match finite differences") {
    SeededStream s(10, "grad");
    const int p = 3, q = 3, m = 2, ns = 4, nt = 3;
    const Mat src = random_mat(s, ns, p);
    const Mat tgt = random_mat(s, nt, p);
    const std::vector<int> labels = {1, 2, 1, 2};
    Mat tp(nt, m);
    for (int i = 0; i < nt; ++i) {
        tp(i, 0) = 0.3 + 0.1 * i;
        tp(i, 1) = 1.0 - tp(i, 0);
    }
    const double scale = 0.5;
    const CahommResult base = cahomm_loss(LatentBatch{src}, labels, m, LatentBatch{tgt}, tp, q, scale);
    const double h = 1e-6;
    auto fd = [&](Mat& which, int i, int j) {
        const double keep = which(i, j);
        which(i, j) = keep + h;
        const double up = cahomm_loss(LatentBatch{src}, labels, m, LatentBatch{tgt}, tp, q, scale, false).value;
        which(i, j) = keep - h;
        const double dn = cahomm_loss(LatentBatch{src}, labels, m, LatentBatch{tgt}, tp, q, scale, false).value;
        which(i, j) = keep;
        return (up - dn) / (2.0 * h);
    };
    Mat& srcm = const_cast<Mat&>(src);
    Mat& tgtm = const_cast<Mat&>(tgt);
    for (int i = 0; i < ns; ++i)
        for (int j = 0; j < p; ++j)
            CHECK(base.grad_source(i, j) == doctest::Approx(fd(srcm, i, j)).epsilon(5e-5));
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < p; ++j)
            CHECK(base.grad_target(i, j) == doctest::Approx(fd(tgtm, i, j)).epsilon(5e-5));
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < m; ++j) CHECK(base.grad_tprobs(i, j) == doctest::Approx(fd(tp, i, j)).epsilon(5e-5));
}

TEST_CASE("kernel runtime does not grow with p^q") {
    // the kernel path must stay usable where the flatten path cannot even allocate
    SeededStream s(11, "big");
    const LatentBatch u{random_mat(s, 16, 64)};
    const LatentBatch v{random_mat(s, 16, 64)};
    const double val = hm_kernel(u, v, 6, 1.0 / 64.0);
    CHECK(std::isfinite(val));
    CHECK_THROWS_AS(hm_bruteforce(u, v, 6), ScaleError);
}
