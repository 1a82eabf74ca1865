// Library walk-through on the bundled second-order system: exact harmonics, both methods,
// frame alignment and error ratios.

#include <cstdio>

#include "cmid/cmid.hpp"

int main() {
    using namespace cmid;
    const PolynomialSystem sys = example_system();
    ExcitationSpec spec;
    spec.frequencies = example_frequencies();
    spec.U = {example_U1()};

    const int order = 4;
    const OscillatorBank bank(spec.frequencies, order);
    const HarmonicData hd = exact_coefficients(sys, spec, bank, order);

    for (Method method : {Method::I, Method::II}) {
        PipelineConfig cfg;
        cfg.method = method;
        const IdentifiedModel mdl = identify(hd, bank, cfg);
        const AlignedModel al = cf_align(sys.C(), sys.A(), mdl.C, mdl.A, mdl.B, mdl.F20);
        std::printf("method %s: order %d, relative F20 error %.2e\n", to_string(method).c_str(), mdl.n,
                    relative_error(al.F20, sys.F(2, 0)));
        for (const auto& [entry, ratio] : model_errors(sys, mdl, HinfOptions{}))
            std::printf("  %-5s %.3e\n", entry.c_str(), ratio);
    }
    return 0;
}
