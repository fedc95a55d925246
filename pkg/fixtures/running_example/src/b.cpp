#include "cls.h"
B::B() { b = 2; }
void B::bf() { b += a; }
