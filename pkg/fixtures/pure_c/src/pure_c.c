/* Plain C control binary: no C++ metadata of any kind. */
#include <stdio.h>
#include <string.h>

static int checksum(const char *s) {
    int acc = 0;
    for (size_t i = 0; i < strlen(s); i++) {
        acc = acc * 31 + s[i];
    }
    return acc;
}

int main(int argc, char **argv) {
    const char *word = argc > 1 ? argv[1] : "control";
    printf("%s -> %d\n", word, checksum(word));
    return 0;
}
