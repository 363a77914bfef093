/* Minimal C consumer: parse a series, score it, print metrics. */
#include <stdio.h>
#include <stdlib.h>

#include "hwdemand.h"

int main(void) {
    const char *csv =
        "timestamp,t_mid\n"
        "2024-01-01T00:00:00Z,50.0\n"
        "2024-01-01T00:03:00Z,49.0\n"
        "2024-01-01T00:05:00Z,48.5\n";
    HwdSeries *series = NULL;
    if (hwd_series_from_csv(csv, "hh", &series) != HWD_STATUS_OK) {
        fprintf(stderr, "parse failed: %s\n", hwd_last_error());
        return 1;
    }
    size_t n = 0;
    hwd_series_len(series, &n);
    double values[16];
    size_t written = 0;
    if (hwd_series_values(series, values, 16, &written) != HWD_STATUS_OK || written != n) {
        return 2;
    }
    double predicted[16];
    for (size_t i = 0; i < n; i++) {
        predicted[i] = values[i] + 0.5;
    }
    HwdMetrics m;
    if (hwd_metrics(values, predicted, n, &m) != HWD_STATUS_OK) {
        return 3;
    }
    HwdStatus bad = hwd_series_len(NULL, &n);
    printf("len=%zu rmse=%.3f null_status=%d version=%s\n", n, m.rmse, (int)bad, hwd_version());
    hwd_series_free(series);
    return 0;
}
