// Generated diamond-over-chain corpus member: depth 3 below the virtual base.
class A { public: int a; virtual void af() { a += 1; } };
class B : public virtual A { public: int b; virtual void bf() { b += a; } };
class C : public virtual A { public: int c; virtual void cf() { c += a; } };
class D : public B, public C { public: int d; virtual void df() { d += b + c; } };
class E : public D { public: int e; virtual void ef() { e += d; } };
class F : public E { public: int f; virtual void ff() { f += d; } };
int main() {
    A a; B b; C c; D d;
    E e;
    F f;
    a.af(); b.bf(); c.cf(); d.df(); e.ef(); f.ff();
    return 0;
}
