#include <stdio.h>
#include <stdlib.h>

#include "genimpute.h"

static int check(GiStatus s, const char *what) {
    if (s != GI_STATUS_OK) {
        const char *msg = gi_last_error_message();
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, msg ? msg : "?");
        return 1;
    }
    return 0;
}

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke data.csv\n");
        return 2;
    }
    GiDataset *data = NULL;
    GiPrepared *prep = NULL;
    GiModel *model = NULL;
    if (check(gi_dataset_load(argv[1], NULL, &data), "load")) return 1;
    if (check(gi_ampute(data, 0.3, 1, GI_SCALING_ALL, &prep), "ampute")) return 1;
    if (check(gi_train(prep, "vae", "{\"epochs\": 3}", &model), "train")) return 1;

    size_t rows = 0, cols = 0, iterations = 0;
    if (check(gi_prepared_shape(prep, GI_PARTITION_TEST, &rows, &cols), "shape")) return 1;
    size_t n = rows * cols;
    double *truth = malloc(n * sizeof(double));
    double *mask_d = malloc(n * sizeof(double));
    double *imputed = malloc(n * sizeof(double));
    uint8_t *mask = malloc(n);
    if (check(gi_prepared_copy(prep, GI_PARTITION_TEST, GI_MATRIX_TRUTH, truth, n), "copy")) return 1;
    if (check(gi_prepared_copy(prep, GI_PARTITION_TEST, GI_MATRIX_MASK, mask_d, n), "copy")) return 1;
    for (size_t i = 0; i < n; i++) mask[i] = mask_d[i] > 0.5;
    if (check(gi_impute(model, prep, GI_PARTITION_TEST, "vae+it", 0, imputed, n, &iterations), "impute")) return 1;
    double rmse = -1.0;
    if (check(gi_rmse_missing(truth, imputed, mask, rows, cols, &rmse), "rmse")) return 1;

    if (gi_impute(model, prep, GI_PARTITION_TEST, "gain", 0, imputed, n, NULL) != GI_STATUS_INVALID_ARGUMENT) return 1;
    printf("version %s rows %zu cols %zu iterations %zu rmse %.6f\n", gi_version(), rows, cols, iterations, rmse);

    free(truth);
    free(mask_d);
    free(imputed);
    free(mask);
    gi_model_free(model);
    gi_prepared_free(prep);
    gi_dataset_free(data);
    return 0;
}
