/* surfelflow: dynamic surface reconstruction with 2D Gaussian surfels.
 *
 * C API over the C++ core. All entry points return sf_status; handles are
 * opaque. Functions never throw across the boundary. Error text for the most
 * recent failure on the calling thread is available via sf_last_error().
 */
#ifndef SURFELFLOW_H
#define SURFELFLOW_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sf_status {
    SF_OK = 0,
    SF_ERROR = 1,                /* unclassified failure */
    SF_ERR_CONFIG = 2,           /* bad config / arguments */
    SF_ERR_DIVERGED = 3,         /* training loss became non-finite */
    SF_ERR_MISSING_ARTIFACT = 4, /* required input file absent or unreadable */
    SF_ERR_PROTOCOL = 5          /* file exists but contents violate the format */
} sf_status;

/* Message for the last failing call on this thread; empty string if none. */
const char* sf_last_error(void);

/* Library version as "major.minor.patch". */
const char* sf_version(void);

/* Global knobs ------------------------------------------------------------ */

/* Worker threads for parallel kernels. 0 = hardware concurrency. Results are
 * byte-identical for any setting. */
sf_status sf_set_threads(int32_t n);

/* Pipeline stages ----------------------------------------------------------
 * Each stage reads a JSON config file (see docs/config.md) and writes its
 * artifacts under the configured output directory. The config seed can be
 * overridden; pass override_seed != 0 together with has_seed_override = 1.
 */

/* Render a synthetic dataset (images, depth, masks, manifest). */
sf_status sf_generate_scene(const char* config_path);

/* Train surfels + velocity fields over all segments; writes checkpoints,
 * loss logs, and a storage summary. */
sf_status sf_train(const char* config_path);

/* Fuse + mesh every non-virtual timestep from trained checkpoints. */
sf_status sf_extract_meshes(const char* config_path);

/* Chamfer/temporal-stability evaluation of extracted meshes against the
 * analytic scene; writes CSV and text reports. */
sf_status sf_evaluate(const char* config_path);

/* Run handle API ------------------------------------------------------------
 * For callers that need stage-by-stage control with one loaded config.
 */
typedef struct sf_run sf_run; /* opaque */

sf_status sf_run_open(const char* config_path, sf_run** out_run);
void sf_run_close(sf_run* run);

/* Override the config seed for this run. */
sf_status sf_run_set_seed(sf_run* run, uint64_t seed);
/* Override the LoRA rank (0 disables incremental motion tuning). */
sf_status sf_run_set_lora_rank(sf_run* run, int32_t rank);

sf_status sf_run_generate_scene(sf_run* run);
sf_status sf_run_train(sf_run* run);
sf_status sf_run_extract_meshes(sf_run* run);
sf_status sf_run_evaluate(sf_run* run);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SURFELFLOW_H */
