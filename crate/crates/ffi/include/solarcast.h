#ifndef SOLARCAST_H
#define SOLARCAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SolarcastStatus {
  SOLARCAST_STATUS_OK = 0,
  SOLARCAST_STATUS_NULL_POINTER = 1,
  SOLARCAST_STATUS_INVALID_ARGUMENT = 2,
  SOLARCAST_STATUS_IO = 3,
  SOLARCAST_STATUS_FORMAT = 4,
  SOLARCAST_STATUS_SCHEMA_MISMATCH = 5,
  SOLARCAST_STATUS_OUT_OF_RANGE = 6,
  SOLARCAST_STATUS_PANIC = 7,
} SolarcastStatus;

// A loaded node embedding.
typedef struct SolarcastEmbedding SolarcastEmbedding;

// A loaded model file.
typedef struct SolarcastModel SolarcastModel;

typedef struct SolarcastMetrics {
  double r2;
  double mae;
  double rmse;
} SolarcastMetrics;

// Message of the last failed call on this thread, or NULL after a success.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *solarcast_last_error(void);

// Library version as a static NUL-terminated string.
const char *solarcast_version(void);

// Loads a model file written by the `train` command.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum SolarcastStatus solarcast_model_load(const char *path, struct SolarcastModel **out);

// # Safety
// `model` must come from [`solarcast_model_load`] and not be used afterwards.
void solarcast_model_free(struct SolarcastModel *model);

// Number of input columns the model expects; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t solarcast_model_feature_count(const struct SolarcastModel *model);

// Name of column `index`, or NULL when out of range. Owned by the handle.
//
// # Safety
// `model` must be null or a live handle.
const char *solarcast_model_feature_name(const struct SolarcastModel *model, size_t index);

// Predicts GHI for `n_rows` unscaled rows of `n_cols` values each,
// row-major. The model's stored scaler is applied first.
//
// # Safety
// `values` must hold `n_rows * n_cols` doubles and `out` `n_rows` doubles.
enum SolarcastStatus solarcast_model_predict(const struct SolarcastModel *model,
                                             const double *values,
                                             size_t n_rows,
                                             size_t n_cols,
                                             double *out);

// Loads an embedding CSV written by the `embed` command.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum SolarcastStatus solarcast_embedding_load(const char *path, struct SolarcastEmbedding **out);

// # Safety
// `embedding` must come from [`solarcast_embedding_load`] and not be used
// afterwards.
void solarcast_embedding_free(struct SolarcastEmbedding *embedding);

// # Safety
// `embedding` must be null or a live handle.
size_t solarcast_embedding_node_count(const struct SolarcastEmbedding *embedding);

// # Safety
// `embedding` must be null or a live handle.
size_t solarcast_embedding_dims(const struct SolarcastEmbedding *embedding);

// Hex SHA-256 of the embedding, as recorded in model files. Owned by the
// handle.
//
// # Safety
// `embedding` must be null or a live handle.
const char *solarcast_embedding_checksum(const struct SolarcastEmbedding *embedding);

// Copies the vector of `node` into `out`, which holds `out_len` doubles.
//
// # Safety
// `out` must be writable for `out_len` doubles.
enum SolarcastStatus solarcast_embedding_row(const struct SolarcastEmbedding *embedding,
                                             size_t node,
                                             double *out,
                                             size_t out_len);

// Great-circle distance in km on a sphere of radius 6371 km.
double solarcast_haversine_km(double lat1, double lon1, double lat2, double lon2);

// Solar zenith angle in degrees for a local clock time whose noon is solar
// noon at `reference_meridian`.
//
// # Safety
// `out` must be writable.
enum SolarcastStatus solarcast_solar_zenith(double lat,
                                            double lon,
                                            int32_t year,
                                            uint32_t month,
                                            uint32_t day,
                                            uint32_t hour,
                                            uint32_t minute,
                                            double reference_meridian,
                                            double *out);

// Clear-sky GHI in W/m² for a zenith angle in degrees; 0 at or below the
// horizon.
double solarcast_clear_sky_ghi(double sza_deg);

// Panel output in watts: `ghi * area * efficiency`.
//
// # Safety
// `out` must be writable.
enum SolarcastStatus solarcast_irradiance_to_power(double ghi,
                                                   double area_m2,
                                                   double efficiency,
                                                   double *out);

// R², MAE and RMSE of `n` predictions.
//
// # Safety
// `y_true` and `y_pred` must hold `n` doubles; `out` must be writable.
enum SolarcastStatus solarcast_metrics(const double *y_true,
                                       const double *y_pred,
                                       size_t n,
                                       struct SolarcastMetrics *out);

#endif  /* SOLARCAST_H */
