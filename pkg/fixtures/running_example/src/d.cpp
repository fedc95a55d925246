#include "cls.h"
D::D() { d = 4; }
void D::df() { d += b + c; }
