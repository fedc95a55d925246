#pragma once

class A {
public:
    int a;
    A();
    virtual void af();
};

class B : public virtual A {
public:
    int b;
    B();
    virtual void bf();
};

class C : public virtual A {
public:
    int c;
    C();
    virtual void cf();
};

class D : public B, public C {
public:
    int d;
    D();
    virtual void df();
};
