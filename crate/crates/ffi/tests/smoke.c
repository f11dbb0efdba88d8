#include <stdio.h>
#include "amortis.h"

int run(void) {
    size_t td = 0, yd = 0;
    if (amortis_task_dims("two_moons", &td, &yd) != AMORTIS_STATUS_OK) {
        fprintf(stderr, "%s\n", amortis_last_error());
        return 1;
    }
    AmortisDataset *ds = NULL;
    AmortisModel *model = NULL;
    double y0[2] = {0.0, 0.0};
    double out[20];
    AmortisStatus s = amortis_dataset_generate("two_moons", 200, 1, &ds);
    if (s == AMORTIS_STATUS_OK) s = amortis_model_train(ds, "upvae", 1, 2, &model);
    if (s == AMORTIS_STATUS_OK) s = amortis_model_sample(model, y0, 2, 10, 3, out, 20);
    amortis_model_free(model);
    amortis_dataset_free(ds);
    return s == AMORTIS_STATUS_OK ? 0 : (int)s;
}

#ifdef AMORTIS_SMOKE_MAIN
int main(void) { return run(); }
#endif
