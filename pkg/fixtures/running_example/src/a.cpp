#include "cls.h"
A::A() { a = 1; }
void A::af() { a += 1; }
