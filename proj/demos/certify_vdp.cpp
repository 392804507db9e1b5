// Library walk-through: certify the Van der Pol cycle with the fine preset,
// print the main quantities, then run a small attraction sweep.
//
//   certify_vdp [samples]

#include <cstdio>
#include <cstdlib>
#include <exception>

#include "cyclecert/cyclecert.hpp"

int main(int argc, char** argv) {
  using namespace cyclecert;
  try {
    const int samples = argc > 1 ? std::atoi(argv[1]) : 3;
    const RunConfig rc = preset("vdp-fine");
    const VectorField field = system_of(rc);
    const ExistenceConfig ec = existence_config(rc);

    const ExistenceCertificate cert = certify_existence(field, *rc.x0, ec);
    std::printf("existence: %s\n", cert.reason.c_str());
    if (cert.first_return) std::printf("  R1 = %.6f  N1 = %zu\n", cert.first_return->R, cert.first_return->N);
    if (cert.tube) std::printf("  delta(R1) = %.6f  (delta0 = %g)\n", cert.tube->delta_end(), cert.delta0);
    if (cert.step) std::printf("  step condition: min margin %.3e, max rhs %.4f\n", cert.step->min_margin, cert.step->max_rhs);
    if (cert.inclusion) std::printf("  return inclusion: %.4f < %.4f\n", cert.inclusion->lhs, cert.inclusion->delta0);
    if (cert.constants)
      std::printf("  L = %.4f  M_f = %.4f  a = %.4f  b = %.4f\n", cert.constants->L, cert.constants->M_f,
                  cert.constants->a, cert.constants->b);
    std::printf("  mu_perp along the loop: [%.4f, %.4f]\n", cert.mu_perp_min, cert.mu_perp_max);
    if (!cert.certified) return 1;

    AttractionConfig ac = attraction_config(rc);
    ac.n_samples = samples;
    const AttractionCertificate att = certify_attraction(cert, field, ec, ac);
    std::printf("attraction: %s  d = %.4f  D = %.1f  D h = %.4f\n", att.reason.c_str(), att.d, att.D, att.Dh);
    for (const auto& s : att.samples)
      std::printf("  z = (%.5f, %.5f)  K = %.5f  R1 = %.5f\n", s.z[0], s.z[1], s.K_max, s.R1);
    return att.certified ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
