#include <math.h>
#include <stdio.h>
#include <string.h>

#include "pa_contracts.h"

#define CHECK(expr)                                                    \
    do {                                                               \
        PacStatus s_ = (expr);                                         \
        if (s_ != PAC_STATUS_OK) {                                     \
            char msg_[256];                                            \
            pac_last_error_message(msg_, sizeof msg_);                 \
            fprintf(stderr, "%s failed (%d): %s\n", #expr, s_, msg_); \
            return 1;                                                  \
        }                                                              \
    } while (0)

int main(void) {
    PacBenchmark params;
    CHECK(pac_benchmark_default(&params));
    params.gammas[0] = 0.5;

    PacModel *model = NULL;
    CHECK(pac_model_benchmark(&params, &model));

    PacFirstBest *fb = NULL;
    CHECK(pac_first_best_solve(model, &fb));
    double fb_value = 0.0;
    CHECK(pac_first_best_principal_value(fb, &fb_value));

    PacSecondBest *sb = NULL;
    CHECK(pac_second_best_solve(model, &sb));
    double sb_value = 0.0, z[4];
    CHECK(pac_second_best_principal_value(sb, &sb_value));
    CHECK(pac_second_best_z(sb, 0, z, 4));

    if (pac_second_best_z(sb, 0, z, 3) != PAC_STATUS_BUFFER_TOO_SMALL) return 2;
    if (pac_last_error_length() == 0) return 3;
    if (pac_model_benchmark(NULL, &model) != PAC_STATUS_NULL_POINTER) return 4;

    PacEstimate agents[2], principal;
    PacSimOptions opts = {2000, 4, 7};
    CHECK(pac_simulate(model, PAC_CONTRACT_SECOND_BEST, PAC_FORMULATION_STRONG, &opts, agents, 2, &principal));

    printf("%s %.12f %.12f %.12f %.6f\n", pac_version(), fb_value, sb_value, z[0], principal.mean);
    pac_second_best_free(sb);
    pac_first_best_free(fb);
    pac_model_free(model);
    return sb_value <= fb_value ? 0 : 5;
}
