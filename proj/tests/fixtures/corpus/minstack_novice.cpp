#include <vector>
using namespace std;

class MinStack {
public:
    vector<int> v;
    int* p;
    int size;
    int minVal;

    MinStack() {
        p = new int;
        size = 0;
        minVal = 2147483647;
        v.reserve(16);
    }

    void push(int val) {
        v[size] = val;
        size++;
        if (val < minVal) minVal = val;
        *p = val;
    }

    void pop() {
        size--;
    }

    int top() {
        return v[size - 1];
    }

    int getMin() {
        return minVal;
    }
};
