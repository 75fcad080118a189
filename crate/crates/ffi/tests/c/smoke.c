#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "textedit.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        TeStatus s_ = (call);                                              \
        if (s_ != TE_STATUS_OK) {                                          \
            fprintf(stderr, "%s failed: %d %s\n", #call, s_, te_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 3) {
        fprintf(stderr, "usage: smoke MODEL OUT_PNG\n");
        return 2;
    }
    TeModel *bad = NULL;
    if (te_model_load("/nonexistent/model.ckpt", &bad) != TE_STATUS_IO || bad != NULL ||
        strlen(te_last_error()) == 0) {
        fprintf(stderr, "missing checkpoint not reported as IO error\n");
        return 1;
    }

    TeModel *model = NULL;
    CHECK(te_model_load(argv[1], &model));
    const char *kind = NULL;
    size_t k = 0;
    CHECK(te_model_kind(model, &kind));
    CHECK(te_model_branches(model, &k));

    enum { W = 13, H = 9 };
    unsigned char pixels[W * H * 3];
    for (size_t i = 0; i < sizeof pixels; i++) pixels[i] = (unsigned char)(40 + (i * 7) % 160);
    TeImage *input = NULL;
    CHECK(te_image_from_rgb8(pixels, sizeof pixels, W, H, &input));

    double weights[16] = {0};
    TeImage *edited = NULL;
    CHECK(te_edit(model, input, "make it brighter", TE_READOUT_FUSION, &edited, weights, 16));
    size_t w = 0, h = 0;
    CHECK(te_image_size(edited, &w, &h));
    if (w != W || h != H) {
        fprintf(stderr, "size changed to %zux%zu\n", w, h);
        return 1;
    }
    double sum = 0;
    for (size_t i = 0; i < k; i++) sum += weights[i];
    if (sum < 0.999999 || sum > 1.000001) {
        fprintf(stderr, "weights sum to %f\n", sum);
        return 1;
    }
    unsigned char small[4];
    if (te_image_to_rgb8(edited, small, sizeof small) != TE_STATUS_BUFFER_TOO_SMALL) return 1;
    if (te_edit(model, NULL, "x", TE_READOUT_ARGMAX, &edited, NULL, 0) !=
        TE_STATUS_NULL_OR_INVALID_ARGUMENT)
        return 1;
    CHECK(te_image_save(edited, argv[2]));

    printf("%s %s K=%zu\n", te_version(), kind, k);
    te_image_free(edited);
    te_image_free(input);
    te_model_free(model);
    return 0;
}
