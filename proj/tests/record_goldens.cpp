// Regenerates the frozen regression values under tests/golden/. Run manually
// after an intentional numerical change; tests compare against these files.
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "repflow/tvl1.hpp"
#include "support/synthetic.hpp"

using namespace repflow;
using namespace repflow::testsupport;

int main() {
  const std::filesystem::path dir = REPFLOW_TEST_DATA_DIR;
  std::filesystem::create_directories(dir);

  TvParams<double> params;
  auto ramp = ramp_fixture();
  auto flow = tvl1_flow(ramp.f1, ramp.f2, params, 100);
  const double ux = interior_mean(flow.u_x);
  const double uy = interior_mean(flow.u_y);
  const double e0 = tv_energy(FlowField<double>(ramp.f1.height(), ramp.f1.width()), ramp.f1,
                              ramp.f2, params.lambda);
  const double e100 = tv_energy(flow, ramp.f1, ramp.f2, params.lambda);

  std::ofstream out(dir / "tvl1_ramp.txt");
  out.precision(17);
  out << "ux_interior_mean " << ux << "\n";
  out << "uy_interior_mean " << uy << "\n";
  out << "energy_u0 " << e0 << "\n";
  out << "energy_u100 " << e100 << "\n";
  out.close();
  std::printf("wrote %s\n", (dir / "tvl1_ramp.txt").c_str());
  return 0;
}
