/* SPDX-License-Identifier: Apache-2.0 */
#include <stdio.h>
#include <string.h>
#include "chipforge.h"

int main(void) {
    double v = 0.0;
    if (cf_pass_at_k(10, 4, 5, &v) != CF_STATUS_OK) return 1;
    printf("pass@5 %.6f\n", v);
    if (cf_pass_at_k(3, 4, 1, &v) != CF_STATUS_DOMAIN) return 2;
    printf("error %s\n", cf_last_error());

    CfLibrary *lib = NULL;
    if (cf_library_new(512, &lib) != CF_STATUS_OK) return 3;
    if (cf_library_insert(lib, "adder8", "module adder8; endmodule", 0.1, 800.0, 0.001) != CF_STATUS_OK) return 4;
    char *json = NULL;
    if (cf_library_retrieve(lib, "adder8", &json) != CF_STATUS_OK) return 5;
    printf("%s\n", json);
    cf_string_free(json);
    cf_library_free(lib);
    return 0;
}
