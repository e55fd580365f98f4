#include <doctest.h>

#include <random>

#include "deepma/metrics.hpp"

using namespace deepma;

namespace {

Ssv random_ssv(std::mt19937_64& rng, Index k, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Ssv s;
  s.symbols.resize(k);
  for (Index i = 0; i < k; ++i) s.symbols[i] = {d(rng), d(rng)};
  return s;
}

std::vector<std::uint8_t> random_image(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> d(0, 255);
  std::vector<std::uint8_t> px(n);
  for (auto& p : px) p = std::uint8_t(d(rng));
  return px;
}

}  // namespace

TEST_CASE("psnr reference values") {
  const std::vector<std::uint8_t> black(48, 0), white(48, 255);
  CHECK(psnr(black, black) == kPsnrCap);
  CHECK(psnr(black, white) == 0.0);
  CHECK(psnr_from_mse(65025.0) == 0.0);
  CHECK(psnr_from_mse(1.0) == doctest::Approx(48.1308036).epsilon(1e-9));
  std::vector<std::uint8_t> off_by_one(48, 1);
  CHECK(psnr(black, off_by_one) == doctest::Approx(10.0 * std::log10(65025.0)));

  CHECK_THROWS_AS(psnr(black, std::vector<std::uint8_t>(47, 0)), InvalidShape);
  CHECK_THROWS_AS(psnr_from_mse(-1.0), ContractViolation);
}

TEST_CASE("psnr falls as the error grows and stays nonnegative") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_image(rng, 64);
    const auto b = random_image(rng, 64);
    CHECK(psnr(a, b) >= 0.0);
  }
  double last = kPsnrCap + 1.0;
  for (double mse = 0.0; mse <= 65025.0; mse += 325.125) {
    const double p = psnr_from_mse(mse);
    CHECK(p < last);
    last = p;
  }
}

TEST_CASE("complex correlation") {
  std::mt19937_64 rng(11);
  Ssv z = random_ssv(rng, 64);
  z.symbols *= std::sqrt(2.0 / z.average_power());
  CHECK(corr_complex(z, z).real() == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(corr_complex(z, z).imag() == 0.0);

  Ssv left = z, right = z;
  left.symbols.tail(32).setZero();
  right.symbols.head(32).setZero();
  CHECK(corr_complex(left, right) == std::complex<double>(0.0, 0.0));

  Ssv rotated = z;
  rotated.symbols *= std::complex<double>(0.0, 1.0);
  CHECK(std::abs(corr_complex(z, rotated) - std::complex<double>(0.0, 2.0)) < 1e-14);

  CHECK_THROWS_AS(corr_complex(z, random_ssv(rng, 63)), InvalidShape);
}

TEST_CASE("correlation identities hold on random pairs") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> len(1, 200);
  std::uniform_real_distribution<double> scale(0.01, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index k = len(rng);
    const Ssv a = random_ssv(rng, k, scale(rng)), b = random_ssv(rng, k, scale(rng));
    const auto ab = corr_complex(a, b), ba = corr_complex(b, a);
    CHECK(ab == std::conj(ba));
    const double real = corr_real(real_view(a), real_view(b));
    CHECK(std::abs(ab.real() - 2.0 * real) <= 1e-12 * std::max(1.0, std::abs(ab.real())));
  }
}

TEST_CASE("normalized SSVs have unit real self-correlation") {
  std::mt19937_64 rng(13);
  Ssv z = random_ssv(rng, 40);
  z.symbols *= std::sqrt(2.0 / z.average_power());
  CHECK(corr_real(real_view(z), real_view(z)) == doctest::Approx(1.0).epsilon(1e-14));
  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(4), e1 = Eigen::VectorXd::Zero(4);
  e0[0] = 1.0;
  e1[1] = 1.0;
  CHECK(corr_real(e0, e1) == 0.0);
}

TEST_CASE("correlation matrices are Hermitian with power on the diagonal") {
  std::mt19937_64 rng(14);
  std::vector<Ssv> z;
  for (int i = 0; i < 3; ++i) {
    z.push_back(random_ssv(rng, 50));
    z.back().symbols *= std::sqrt(2.0 / z.back().average_power());
  }
  const auto rz = correlation_matrix(z);
  const auto rv = real_correlation_matrix(z);
  CHECK((rz - rz.adjoint()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rv - rv.transpose()).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 3; ++i) {
    CHECK(rz(i, i).real() == doctest::Approx(2.0).epsilon(1e-13));
    CHECK(rv(i, i) == doctest::Approx(1.0).epsilon(1e-13));
  }
  CHECK(((rz.real() - 2.0 * rv).cwiseAbs().maxCoeff()) < 1e-12);

  const auto mean = corr_complex(std::span<const Ssv>(z).first(2), std::span<const Ssv>(z).last(2));
  CHECK(std::abs(mean - 0.5 * (rz(0, 1) + rz(1, 2))) < 1e-15);
}

TEST_CASE("bandwidth metrics") {
  const auto full = bandwidth_metrics(128, 2);
  CHECK(full.cspp == 1.0);
  CHECK(full.min_cspp == 0.5);
  CHECK(bandwidth_metrics(64, 1).spp == 1.0);
  for (int c = 1; c <= 512; ++c) {
    for (int n = 1; n <= 16; ++n) {
      const auto m = bandwidth_metrics(c, n);
      CHECK(m.spp == 2.0 * m.cspp);
      CHECK(m.min_cspp == doctest::Approx(m.cspp / n).epsilon(1e-15));
    }
  }
  CHECK_THROWS_AS(bandwidth_metrics(0, 2), ContractViolation);
}

TEST_CASE("average PSNR over reports") {
  auto report = [](std::optional<double> p) {
    TransmissionReport r;
    r.psnr_db = p;
    return r;
  };
  const std::vector<TransmissionReport> one{report(31.5)};
  CHECK(avg_psnr(one) == 31.5);
  const std::vector<TransmissionReport> pair{report(30.0), report(36.0), report(std::nullopt)};
  CHECK(avg_psnr(pair) == 33.0);
  const std::vector<TransmissionReport> same{report(24.0), report(24.0)};
  CHECK(avg_psnr(same) == 24.0);
  const std::vector<TransmissionReport> none{report(std::nullopt)};
  CHECK_THROWS_AS(avg_psnr(none), ContractViolation);
}
