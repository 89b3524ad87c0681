class TicTacToe:
    def __init__(self, n):
        self.n = n
        self.board = [[0] * n for _ in range(n)]

    def move(self, row, col, player):
        self.board[row][col] = player
        n = self.n
        if all(self.board[row][j] == player for j in range(n)):
            return player
        if all(self.board[i][col] == player for i in range(n)):
            return player
        if all(self.board[i][i] == player for i in range(n)):
            return player
        return 0
