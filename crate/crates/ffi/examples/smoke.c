/* Minimal C client: fit a Gaussian, score two rows, compute metrics. */
#include <stdio.h>
#include "ood.h"

int main(void) {
    const double train[8] = {0, 0, 2, 0, 0, 2, 2, 2};
    const double rows[4] = {1, 1, 3, 1};
    double dist[2];
    OodGaussian *g = NULL;
    if (ood_gaussian_fit(train, 4, 2, OOD_EPSILON_KIND_NONE, 0.0, &g) != OOD_STATUS_OK) {
        fprintf(stderr, "fit: %s\n", ood_last_error_message());
        return 1;
    }
    if (ood_gaussian_mahalanobis(g, rows, 2, 2, dist) != OOD_STATUS_OK) {
        return 1;
    }
    ood_gaussian_free(g);

    const double scores[4] = {0.1, 0.4, 0.35, 0.8};
    const uint8_t ood[4] = {0, 0, 1, 1};
    OodMetrics m;
    if (ood_metrics(scores, ood, 4, 0.75, &m) != OOD_STATUS_OK) {
        return 1;
    }
    if (ood_gaussian_fit(train, 1, 2, 7, 0.0, &g) != OOD_STATUS_INVALID_ARGUMENT || g != NULL) {
        return 1;
    }
    printf("%.6f %.6f %.6f\n", dist[0], dist[1], m.auroc);
    return 0;
}
