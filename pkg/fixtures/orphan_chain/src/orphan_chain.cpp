// Only the most-derived class is ever constructed: the intermediate
// classes survive solely as construction vtables (no regular vtable).
class A { public: int a; virtual void af() { a += 1; } };
class B : public virtual A { public: int b; virtual void bf() { b += a; } };
class C : public virtual A { public: int c; virtual void cf() { c += a; } };
class D : public B, public C { public: int d; virtual void df() { d += b + c; } };
class E : public D { public: int e; virtual void ef() { e += d; } };
int main() {
    E e;
    e.ef();
    return 0;
}
