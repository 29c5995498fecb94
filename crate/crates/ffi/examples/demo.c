#include <stdio.h>
#include <string.h>

#include "pcfgen.h"

static const char *GRAMMAR =
    "%whitespace skip ;\n"
    "Expr -> Term | Expr \"+\" Term | Expr \"-\" Term ;\n"
    "Term -> Factor | Term \"*\" Factor | Term \"/\" Factor ;\n"
    "Factor -> Int | \"+\" Factor | \"-\" Factor | \"(\" Expr \")\" ;\n"
    "Int -> Digit Int | Digit ;\n"
    "Digit -> \"0\" | \"1\" | \"2\" | \"3\" | \"4\" | \"5\" | \"6\" | \"7\" | \"8\" | \"9\" ;\n";

static int fail(const char *what) {
    const char *msg = pcfg_last_error();
    fprintf(stderr, "%s: %s\n", what, msg ? msg : "(no message)");
    return 1;
}

int main(void) {
    PcfgGrammar *g = NULL, *learned = NULL, *inverted = NULL;
    const char *samples[] = {"1 + (2 * 3)"};
    char *text = NULL;

    if (pcfg_grammar_parse(GRAMMAR, &g) != PCFG_STATUS_OK) return fail("parse grammar");
    if (pcfg_learn(g, samples, 1, false, &learned) != PCFG_STATUS_OK) return fail("learn");
    if (pcfg_invert(learned, &inverted) != PCFG_STATUS_OK) return fail("invert");
    for (uint64_t i = 0; i < 3; i++) {
        if (pcfg_generate(inverted, 40, 7, i, &text) != PCFG_STATUS_OK) return fail("generate");
        if (strpbrk(text, "123") != NULL) return fail("generated a seen digit");
        printf("%s\n", text);
        pcfg_string_free(text);
    }
    if (pcfg_parse_json(g, "1 +", &text) != PCFG_STATUS_PARSE_ERROR) return fail("expected parse error");

    pcfg_grammar_free(inverted);
    pcfg_grammar_free(learned);
    pcfg_grammar_free(g);
    return 0;
}
