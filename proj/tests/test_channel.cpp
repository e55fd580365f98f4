#include <doctest.h>

#include <random>
#include <set>

#include "deepma/channel.hpp"

using namespace deepma;

namespace {

Ssv random_ssv(std::mt19937_64& rng, Index k) {
  std::normal_distribution<double> d;
  Ssv s;
  s.symbols.resize(k);
  for (Index i = 0; i < k; ++i) s.symbols[i] = {d(rng), d(rng)};
  return s;
}

std::vector<Ssv> random_ssvs(std::mt19937_64& rng, int n, Index k) {
  std::vector<Ssv> out;
  for (int i = 0; i < n; ++i) out.push_back(random_ssv(rng, k));
  return out;
}

ChannelRealization identity_channel(int n) {
  ChannelRealization ch;
  ch.csi = Eigen::MatrixXcd::Identity(n, n);
  ch.noise_power = Eigen::VectorXd::Zero(n);
  return ch;
}

}  // namespace

TEST_CASE("noise power from SNR") {
  CHECK(noise_power_from_snr(0.0, 2.0) == 2.0);
  CHECK(noise_power_from_snr(10.0, 2.0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(noise_power_from_snr(20.0, 2.0) == doctest::Approx(0.02).epsilon(1e-15));
}

TEST_CASE("scenario kinds parse") {
  CHECK(parse_scenario_kind("awgn") == ScenarioKind::awgn);
  CHECK(parse_scenario_kind("uplink") == ScenarioKind::uplink);
  CHECK(std::string(to_string(ScenarioKind::downlink)) == "downlink");
  CHECK_THROWS_AS(parse_scenario_kind("rician"), ConfigError);
}

TEST_CASE("CSI structure follows the scenario kind") {
  const std::vector<double> snr{5.0, 10.0, 15.0};
  const auto awgn = draw_channel(ScenarioKind::awgn, snr, 2.0, 3);
  CHECK(awgn.csi == Eigen::MatrixXcd::Ones(3, 3));
  CHECK(awgn.noise_power[1] == doctest::Approx(0.2));

  const auto down = draw_channel(ScenarioKind::downlink, snr, 2.0, 3);
  const auto up = draw_channel(ScenarioKind::uplink, snr, 2.0, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(down.csi(i, j) == down.csi(0, j));
      CHECK(up.csi(i, j) == up.csi(i, 0));
    }
  }
  CHECK((up.noise_power.array() == up.noise_power[0]).all());
  CHECK(up.noise_power[0] == doctest::Approx(noise_power_from_snr(5.0, 2.0)));

  const auto d2d = draw_channel(ScenarioKind::d2d, snr, 2.0, 3);
  CHECK(d2d.csi(0, 1) != d2d.csi(1, 0));
  CHECK(draw_channel(ScenarioKind::d2d, snr, 2.0, 3).csi == d2d.csi);
  CHECK(draw_channel(ScenarioKind::d2d, snr, 2.0, 4).csi != d2d.csi);
  CHECK_THROWS_AS(draw_channel(ScenarioKind::d2d, std::vector<double>{}, 2.0, 3), ContractViolation);
}

TEST_CASE("identity channel passes symbols through exactly") {
  std::mt19937_64 rng(1);
  const std::vector<Ssv> z{random_ssv(rng, 16)};
  const auto rx = transmit(z, identity_channel(1), ScenarioKind::d2d);
  CHECK(rx[0] == z[0].symbols);
  CHECK(equalize(rx[0], 1.0, 2.0).symbols == z[0].symbols);
}

TEST_CASE("equalization divides by the own-link coefficient") {
  std::mt19937_64 rng(2);
  const Ssv z = random_ssv(rng, 12);
  const Ssv halved = equalize(z.symbols, 2.0, 2.0);
  CHECK((halved.symbols - 0.5 * z.symbols).cwiseAbs().maxCoeff() == 0.0);

  ChannelRealization ch = identity_channel(1);
  ch.csi(0, 0) = {0.3, -0.4};
  const std::vector<Ssv> tx{z};
  const Ssv back = equalize(transmit(tx, ch, ScenarioKind::d2d)[0], ch.csi(0, 0), 2.0);
  CHECK((back.symbols - z.symbols).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((back.symbols - z.symbols).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(equalize(z.symbols, {1e-3, 0.0}, 2.0), DeepFade);
  CHECK_THROWS_AS(equalize(z.symbols, 0.0, 2.0), DeepFade);
  CHECK_NOTHROW(equalize(z.symbols, {1.1e-3, 0.0}, 2.0));
}

TEST_CASE("transmit superposes every transmitter at every receiver") {
  std::mt19937_64 rng(3);
  const auto z = random_ssvs(rng, 3, 8);
  auto ch = sample_csi(3, 17);
  const auto rx = transmit(z, ch, ScenarioKind::d2d);
  for (int j = 0; j < 3; ++j) {
    Eigen::VectorXcd expect = Eigen::VectorXcd::Zero(8);
    for (int i = 0; i < 3; ++i) expect += ch.csi(i, j) * z[std::size_t(i)].symbols;
    CHECK((rx[std::size_t(j)] - expect).cwiseAbs().maxCoeff() < 1e-15);
  }

  const std::vector<Ssv> uneven{random_ssv(rng, 8), random_ssv(rng, 9), random_ssv(rng, 8)};
  CHECK_THROWS_AS(transmit(uneven, ch, ScenarioKind::d2d), InvalidShape);
  CHECK_THROWS_AS(transmit(std::span(z).first(2), ch, ScenarioKind::d2d), InvalidShape);
}

TEST_CASE("silent transmitters contribute nothing") {
  std::mt19937_64 rng(4);
  auto z = random_ssvs(rng, 2, 8);
  const std::vector<double> snr{10.0, 10.0};
  const auto ch = draw_channel(ScenarioKind::d2d, snr, 2.0, 5);
  const auto both = transmit(z, ch, ScenarioKind::d2d);
  z[1] = silent_ssv(8, 2.0);
  const auto one = transmit(z, ch, ScenarioKind::d2d);
  const auto noise = draw_noise(ch, ScenarioKind::d2d, 8);
  for (int j = 0; j < 2; ++j) {
    CHECK((one[std::size_t(j)] - (ch.csi(0, j) * z[0].symbols + noise[std::size_t(j)])).norm() == 0.0);
    CHECK((both[std::size_t(j)] - one[std::size_t(j)]).norm() > 0.0);
  }
}

TEST_CASE("downlink and uplink are special cases of d2d") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 4;
    const auto z = random_ssvs(rng, n, 10);
    std::vector<double> snr;
    for (int i = 0; i < n; ++i) snr.push_back(double(3 * i + trial % 7));

    const auto down = draw_channel(ScenarioKind::downlink, snr, 2.0, std::uint64_t(trial));
    ChannelRealization as_d2d = down;
    const auto rx_down = transmit(z, down, ScenarioKind::downlink);
    const auto rx_d2d = transmit(z, as_d2d, ScenarioKind::d2d);
    for (int j = 0; j < n; ++j) CHECK(rx_down[std::size_t(j)] == rx_d2d[std::size_t(j)]);

    const auto up = draw_channel(ScenarioKind::uplink, snr, 2.0, std::uint64_t(trial));
    const auto rx_up = transmit(z, up, ScenarioKind::uplink);
    const auto rx_up_d2d = transmit(z, up, ScenarioKind::d2d);
    for (int j = 0; j < n; ++j) {
      CHECK(rx_up[std::size_t(j)] == rx_up[0]);
      // Receiver 0 of the d2d construction sees the same noise draw.
      CHECK(rx_up[std::size_t(j)] == rx_up_d2d[0]);
    }
  }
}

TEST_CASE("transmit is linear in the symbols under frozen noise") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_ssvs(rng, 3, 6);
    const auto b = random_ssvs(rng, 3, 6);
    std::vector<Ssv> ab = a;
    for (int i = 0; i < 3; ++i) ab[std::size_t(i)].symbols += b[std::size_t(i)].symbols;
    ChannelRealization ch = sample_csi(3, std::uint64_t(trial));
    const auto ra = transmit(a, ch, ScenarioKind::d2d);
    const auto rb = transmit(b, ch, ScenarioKind::d2d);
    const auto rab = transmit(ab, ch, ScenarioKind::d2d);
    for (int j = 0; j < 3; ++j) {
      CHECK((rab[std::size_t(j)] - ra[std::size_t(j)] - rb[std::size_t(j)]).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
}

TEST_CASE("graph transmit agrees with the reference transmit") {
  std::mt19937_64 rng(7);
  const Index batch = 3, k = 5;
  const std::vector<double> snr{4.0, 12.0};
  std::vector<ChannelRealization> rows;
  for (Index b = 0; b < batch; ++b) rows.push_back(draw_clear_channel(ScenarioKind::d2d, snr, 2.0, 40 + b));
  std::vector<std::vector<Ssv>> z(static_cast<std::size_t>(batch));
  for (auto& row : z) row = random_ssvs(rng, 2, k);

  Graph<double> g;
  std::vector<Var<double>> vars;
  for (int i = 0; i < 2; ++i) {
    std::vector<Ssv> col;
    for (Index b = 0; b < batch; ++b) col.push_back(z[std::size_t(b)][std::size_t(i)]);
    vars.push_back(g.input(stack_ssvs<double>(col)));
  }
  const auto rx = transmit<double>(vars, rows, ScenarioKind::d2d);
  for (int j = 0; j < 2; ++j) {
    const auto eq = equalize(rx[std::size_t(j)], rows, j);
    for (Index b = 0; b < batch; ++b) {
      const auto& ch = rows[std::size_t(b)];
      const auto ref = transmit(z[std::size_t(b)], ch, ScenarioKind::d2d);
      const Ssv want = equalize(ref[std::size_t(j)], ch.csi(j, j), 2.0);
      for (Index s = 0; s < k; ++s) {
        CHECK(std::abs(eq.value()[b * 2 * k + 2 * s] - want.symbols[s].real()) < 1e-12);
        CHECK(std::abs(eq.value()[b * 2 * k + 2 * s + 1] - want.symbols[s].imag()) < 1e-12);
      }
    }
  }
}

TEST_CASE("clear draws never contain an own-link outage") {
  const std::vector<double> snr{10.0, 10.0, 10.0, 10.0};
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const auto ch = draw_clear_channel(ScenarioKind::d2d, snr, 2.0, s);
    for (int i = 0; i < 4; ++i) CHECK_FALSE(ch.in_outage(i));
  }
  ChannelRealization faded = identity_channel(2);
  faded.csi(1, 1) = 5e-4;
  CHECK(faded.in_outage(1));
  CHECK_FALSE(faded.in_outage(0));
}

TEST_CASE("noise is calibrated and circularly symmetric") {
  const Index k = 250000;
  for (double target : {0.0, 10.0, 20.0}) {
    const std::vector<double> snr{target, target, target, target};
    const auto ch = draw_channel(ScenarioKind::awgn, snr, 2.0, 11);
    const auto noise = draw_noise(ch, ScenarioKind::awgn, k);
    double power = 0.0, cross = 0.0, re2 = 0.0, im2 = 0.0;
    for (const auto& v : noise) {
      power += v.squaredNorm();
      cross += (v.real().array() * v.imag().array()).sum();
      re2 += v.real().squaredNorm();
      im2 += v.imag().squaredNorm();
    }
    const double samples = double(4 * k);
    const double measured = 10.0 * std::log10(2.0 / (power / samples));
    CHECK(std::abs(measured - target) < 0.1);
    CHECK(std::abs(cross / std::sqrt(re2 * im2)) < 1e-2);
  }
}

TEST_CASE("CSI entries have unit average power") {
  double acc = 0.0;
  std::complex<double> mean = 0.0;
  const int draws = 62500;
  for (int s = 0; s < draws; ++s) {
    const auto ch = sample_csi(4, std::uint64_t(s));
    acc += ch.csi.squaredNorm();
    mean += ch.csi.sum();
  }
  CHECK(acc / (16.0 * draws) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(std::abs(mean) / (16.0 * draws) < 0.01);
}

TEST_CASE("derived seeds are distinct per stream") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) seen.insert(derive_seed(42, s));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(42, 0) != derive_seed(43, 0));
}
