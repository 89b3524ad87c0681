class MinStack:
    def __init__(self):
        self.items = []
        self.mins = []

    def push(self, val):
        self.items.append(val)
        if not self.mins or val <= self.mins[-1]:
            self.mins.append(val)

    def pop(self):
        if not self.items:
            raise IndexError("pop on empty stack")
        if self.items[-1] == self.mins[-1]:
            self.mins.pop()
        self.items.pop()

    def top(self):
        if not self.items:
            raise IndexError("top on empty stack")
        return self.items[-1]

    def get_min(self):
        if not self.mins:
            raise IndexError("get_min on empty stack")
        return self.mins[-1]
