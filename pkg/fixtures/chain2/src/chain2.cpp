// Generated diamond-over-chain corpus member: depth 2 below the virtual base.
class A { public: int a; virtual void af() { a += 1; } };
class B : public virtual A { public: int b; virtual void bf() { b += a; } };
class C : public virtual A { public: int c; virtual void cf() { c += a; } };
class D : public B, public C { public: int d; virtual void df() { d += b + c; } };
class E : public D { public: int e; virtual void ef() { e += d; } };
int main() {
    A a; B b; C c; D d;
    E e;
    a.af(); b.bf(); c.cf(); d.df(); e.ef();
    return 0;
}
