#include <stdio.h>
#include <string.h>
#include "manet.h"

static const char *REGISTRY =
    "sai 10.0.0.1 aa:00:00:00:00:01 192.168.1.1 bb:00:00:00:00:01\n"
    "pritu 10.0.0.2 aa:00:00:00:00:02 192.168.1.2 bb:00:00:00:00:02\n"
    "nitin 10.0.0.3 aa:00:00:00:00:03 192.168.1.3 bb:00:00:00:00:03\n";

#define CHECK(expr)                                                        \
    do {                                                                   \
        if (!(expr)) {                                                     \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #expr, \
                    manet_last_error());                                   \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    ManetTestbed *tb = manet_testbed_from_registry(REGISTRY);
    CHECK(tb != NULL);
    CHECK(manet_build_scenario(tb, "lab", 3, 100, 2, 7, 1) == MANET_STATUS_OK);
    CHECK(manet_apply_topology(tb, "lab", 0, false) == MANET_STATUS_OK);
    CHECK(manet_apply_topology(tb, "ghost", 0, false) == MANET_STATUS_NOT_FOUND);

    ManetPingResult r;
    CHECK(manet_ping(tb, "sai", "nitin", 3, 500, &r) == MANET_STATUS_OK);
    CHECK(r.transmitted == 3 && r.received == 3 && r.loss_pct == 0);

    int32_t code = -1;
    char *out = NULL;
    CHECK(manet_exec(tb, "pritu", "echo ok", &code, &out) == MANET_STATUS_OK);
    CHECK(code == 0 && strcmp(out, "ok\n") == 0);
    manet_string_free(out);

    char *dot = manet_current_dot(tb);
    CHECK(dot != NULL && strncmp(dot, "graph", 5) == 0);
    manet_string_free(dot);

    manet_testbed_free(tb);
    puts("c smoke ok");
    return 0;
}
