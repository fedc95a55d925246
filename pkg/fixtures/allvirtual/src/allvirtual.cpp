// All bases of the most-derived class are inherited virtually.
class A { public: int a; virtual void af() { a += 1; } };
class B { public: int b; virtual void bf() { b += 1; } };
class C { public: int c; virtual void cf() { c += 1; } };
class D : public virtual A, public virtual B, public virtual C {
public:
    int d;
    virtual void df() { d += a + b + c; }
};
int main() {
    A a; B b; C c; D d;
    a.af(); b.bf(); c.cf(); d.df();
    return 0;
}
