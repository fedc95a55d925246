#include "cls.h"
int main() {
    A a; B b; C c; D d;
    a.af(); b.bf(); c.cf(); d.df();
    return d.d;
}
