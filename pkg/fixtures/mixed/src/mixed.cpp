// A class with one plain base and one virtual base, plus a class the
// linker never sees instantiated (dropped from the binary entirely).
class V { public: int v; virtual void vf() { v += 1; } };
class P { public: int p; virtual void pf() { p += 1; } };
class M : public P, public virtual V {
public:
    int m;
    virtual void mf() { m += p + v; }
};
class W : public virtual V {
public:
    int w;
    virtual void wf() { w += v; }
};
int main() {
    V v; P p; M m;
    v.vf(); p.pf(); m.mf();
    return 0;
}
