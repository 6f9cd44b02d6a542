namespace asuka {}
