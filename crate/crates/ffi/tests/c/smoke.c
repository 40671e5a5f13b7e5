#include <stdio.h>
#include <string.h>

#include "powerdesk.h"

#define CHECK(cond)                                                    \
    do {                                                               \
        if (!(cond)) {                                                 \
            fprintf(stderr, "check failed at line %d: %s\n", __LINE__, #cond); \
            return 1;                                                  \
        }                                                              \
    } while (0)

int main(void) {
    PdSession *s = NULL;
    char *out = NULL;

    CHECK(pd_session_new(&s) == PD_STATUS_OK);
    CHECK(pd_invoke(s, "solve_acopf_case", "{\"case_name\": \"case14\"}", &out) == PD_STATUS_OK);
    CHECK(strstr(out, "\"objective_cost\"") != NULL);
    pd_string_free(out);

    out = NULL;
    CHECK(pd_invoke(s, "no_such_tool", "{}", &out) == PD_STATUS_UNKNOWN_TOOL);
    CHECK(out == NULL);
    CHECK(pd_last_error() != NULL && strstr(pd_last_error(), "no_such_tool") != NULL);

    CHECK(pd_chat(s, "what's the most critical contingencies in this network", &out) == PD_STATUS_OK);
    CHECK(strstr(out, "\"provenance\"") != NULL);
    pd_string_free(out);

    CHECK(pd_session_summary(NULL, &out) == PD_STATUS_NULL_ARGUMENT);
    pd_session_free(s);
    printf("ok %s\n", pd_version());
    return 0;
}
