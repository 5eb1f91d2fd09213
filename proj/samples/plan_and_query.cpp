// Plans a MinHash index for a planted instance, builds it and runs one query.
//
//   ./plan_and_query [n] [s1] [s2]

#include "hllsh/hllsh.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    const std::uint64_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 4096;
    const double s1 = argc > 2 ? std::atof(argv[2]) : 0.5;
    const double s2 = argc > 3 ? std::atof(argv[3]) : 0.1;

    try {
        const hllsh::SensitivityProfile prof = hllsh::derive_profile(s1, s2, n);
        const hllsh::TablePlan classic = hllsh::plan_classic(prof);
        const hllsh::TablePlan high_low = hllsh::plan_high_low(prof);
        std::cout << "rho=" << prof.rho << " kappa=" << prof.kappa << " alpha=" << prof.alpha << "\n"
                  << "classic:  " << classic.total_tables() << " tables of length " << classic.low_len << "\n"
                  << "high-low: " << high_low.num_high << " x " << high_low.high_len << " + " << high_low.num_low
                  << " x " << high_low.low_len << "\n";

        const hllsh::PlantedInstance inst = hllsh::generate_planted(hllsh::FamilyKind::MinHash, n, s1, s2, 42);
        hllsh::HashFamilySpec family = inst.family;
        family.seed = 7;
        const hllsh::IndexSet index = hllsh::build(high_low, family, inst.dataset, 2024);
        const hllsh::QueryResult res = hllsh::query(index, inst.query, inst.r2);
        if (res.found()) {
            std::cout << "found " << inst.dataset[res.point_index].id << " at distance " << res.distance
                      << " (planted: " << inst.planted_id << ")\n";
        } else {
            std::cout << "not found\n";
        }
        std::cout << "tables probed " << res.tables_probed << ", far candidates " << res.far_candidates_examined
                  << "\n";
    } catch (const hllsh::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
