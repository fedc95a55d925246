// Abstract virtual base: its vtable slots hold the pure-virtual handler,
// which only exists as a PLT import in the stripped binary.
class A {
public:
    int a;
    virtual void af() = 0;
};
class B : public virtual A {
public:
    int b;
    void af() { b += a; }
    virtual void bf() { b += 1; }
};
class D : public B {
public:
    int d;
    virtual void df() { d += b; }
};
int main() {
    B b; D d;
    b.af(); d.df();
    return 0;
}
