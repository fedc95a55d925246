#include "cls.h"
C::C() { c = 3; }
void C::cf() { c += a; }
