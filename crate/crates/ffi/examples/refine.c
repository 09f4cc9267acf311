/* Uniform and local refinement of the cube through the C interface. */
#include <stdio.h>
#include "hibem.h"

int main(void) {
    HibemGeometry *geom = NULL;
    HibemMesh *coarse = NULL, *fine = NULL;
    size_t n0 = 0, n1 = 0;
    bool admissible = false;

    if (hibem_geometry_new("cube", &geom) != HIBEM_STATUS_OK) return 1;
    if (hibem_mesh_initial(geom, 0, &coarse) != HIBEM_STATUS_OK) return 1;
    size_t marked[] = {0, 3};
    if (hibem_mesh_refine(coarse, marked, 2, &fine) != HIBEM_STATUS_OK) return 1;
    hibem_mesh_num_elements(coarse, &n0);
    hibem_mesh_num_elements(fine, &n1);
    hibem_mesh_is_admissible(fine, &admissible);
    printf("%zu %zu %d\n", n0, n1, admissible ? 1 : 0);

    HibemTrace *trace = NULL;
    if (hibem_run("{\"p\": 3}", &trace) != HIBEM_STATUS_CONFIG_ERROR) return 2;
    char msg[256];
    size_t needed = 0;
    if (hibem_last_error_message(msg, sizeof msg, &needed) != HIBEM_STATUS_OK) return 2;

    hibem_mesh_free(fine);
    hibem_mesh_free(coarse);
    hibem_geometry_free(geom);
    return 0;
}
